#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include "helpers.hpp"
#include "slmw/cli.hpp"

using nlohmann::json;
using slmw::testing::read_file;
using slmw::testing::TempDir;
using slmw::testing::write_file;

namespace {

struct Outcome {
  int status = 0;
  std::string out;
  std::string err;

  json summary() const { return json::parse(out); }
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Outcome o;
  o.status = slmw::cli::run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

Outcome ok(std::vector<std::string> args) {
  auto o = run(args);
  INFO(o.err);
  REQUIRE(o.status == 0);
  return o;
}

const char* const kTopics[][2] = {
    {"Economics", "markets prices trade firms demand supply"},
    {"History", "empire war century kings archives medieval"},
    {"Law", "court statute judges rights contract legal"},
};

std::string records_tsv() {
  std::string tsv = "record_id\ttitle\tabstract\tissn\tyear\tcategories\n";
  int id = 0;
  for (int round = 0; round < 12; ++round) {
    for (const auto& [category, words] : kTopics) {
      std::istringstream in(words);
      std::vector<std::string> w{std::istream_iterator<std::string>(in), {}};
      std::string abstract;
      for (int k = 0; k < 6; ++k) abstract += w[(round + k * 5) % w.size()] + (k == 5 ? "." : " ");
      abstract += " Study " + std::to_string(round) + ".";
      tsv += std::to_string(id++) + "\tOn " + w[round % w.size()] + "\t" + abstract + "\t\t2015\t" + category + "\n";
    }
  }
  return tsv;
}

const std::vector<std::string> kTiny = {"--layers", "1", "--hidden", "16", "--heads", "2",
                                        "--ff", "32", "--max-positions", "64", "--dropout", "0"};

}  // namespace

TEST_CASE("help lists every config key and exits cleanly") {
  const auto o = run({"pretrain", "--help"});
  CHECK(o.status == 0);
  for (const auto* key : {"max_seq_length", "learning_rate", "train_batch_size", "eval_batch_size",
                          "num_train_epochs", "gradient_accumulation_steps", "warmup_steps", "adam_epsilon",
                          "mask_rate", "seed", "line_by_line"}) {
    CHECK(o.out.find(key) != std::string::npos);
  }
  CHECK(run({"--help"}).status == 0);
}

TEST_CASE("exit status mapping") {
  CHECK(slmw::cli::exit_code(slmw::ErrorCode::kNotFound) == 2);
  CHECK(slmw::cli::exit_code(slmw::ErrorCode::kConfig) == 3);
  CHECK(slmw::cli::exit_code(slmw::ErrorCode::kDivergence) == 4);
  CHECK(slmw::cli::exit_code(slmw::ErrorCode::kParse) == 1);

  TempDir dir;
  const auto missing = run({"corpus", "stats", "--in", (dir / "absent.txt").string()});
  CHECK(missing.status == 2);
  CHECK(json::parse(missing.err)["error"] == "not_found");
  CHECK(missing.out.empty());

  CHECK(run({"frobnicate"}).status == 1);
  CHECK(run({"corpus", "split"}).status == 1);
}

TEST_CASE("end-to-end pipeline") {
  TempDir dir;
  auto p = [&](const std::string& name) { return (dir / name).string(); };
  write_file(dir / "records.tsv", records_tsv());

  const auto cleaned = ok({"corpus", "clean", "--in", p("records.tsv"), "--out", p("clean.tsv"), "--lines", p("lines.txt")});
  CHECK(cleaned.summary()["kept"] == 36);
  const auto stats = ok({"corpus", "stats", "--records", p("clean.tsv")});
  CHECK(stats.summary()["n_documents"] == 36);

  const auto split = ok({"corpus", "split", "--in", p("lines.txt"), "--train", p("train.txt"), "--test", p("test.txt"),
                         "--train-weight", "9", "--test-weight", "1"});
  CHECK(split.summary()["test"].get<int>() >= 1);

  ok({"vocab", "build", "--corpus", p("train.txt"), "--size", "120", "--out", p("vocab.txt")});
  std::vector<std::string> init = {"init", "--vocab", p("vocab.txt"), "--out", p("init.ckpt")};
  init.insert(init.end(), kTiny.begin(), kTiny.end());
  ok(init);

  write_file(dir / "bad.cfg", "num_train_epochs = 2\nno_such_key = 1\n");
  const auto bad = run({"pretrain", "--corpus", p("train.txt"), "--init", p("init.ckpt"), "--out", p("x.ckpt"),
                        "--config", p("bad.cfg")});
  CHECK(bad.status == 3);
  CHECK(json::parse(bad.err)["error"] == "config");

  write_file(dir / "run.cfg", "# toy run\nnum_train_epochs = 2\ntrain_batch_size = 8\nlearning_rate = 1e-3\n");
  const std::vector<std::string> pretrain = {"pretrain", "--corpus", p("train.txt"), "--init", p("init.ckpt"),
                                             "--config", p("run.cfg"), "--set", "max_seq_length=32"};
  auto with_out = [&](std::vector<std::string> args, const std::string& out) {
    args.push_back("--out");
    args.push_back(p(out));
    return args;
  };
  const auto pre = ok(with_out(pretrain, "pre.ckpt"));
  CHECK(pre.summary()["updates"].get<int>() > 0);
  const auto csv = read_file(dir / "pre.loss.csv");
  CHECK(csv.rfind("step,epoch,lr,loss\n", 0) == 0);

  SUBCASE("same seed gives byte-identical artifacts") {
    ok(with_out(pretrain, "again.ckpt"));
    CHECK(read_file(dir / "again.ckpt") == read_file(dir / "pre.ckpt"));
    CHECK(read_file(dir / "again.loss.csv") == csv);
    auto other = with_out(pretrain, "other.ckpt");
    other.insert(other.end(), {"--seed", "7"});
    ok(other);
    CHECK(read_file(dir / "other.ckpt") != read_file(dir / "pre.ckpt"));
  }

  SUBCASE("divergence is reported") {
    auto args = with_out(pretrain, "div.ckpt");
    args.insert(args.end(), {"--set", "learning_rate=1e300", "--set", "warmup_steps=0"});
    const auto div = run(args);
    CHECK(div.status == 4);
  }

  SUBCASE("downstream commands") {
    const auto ppl = ok({"perplexity", "--model", p("pre.ckpt"), "--data", p("test.txt"), "--out", p("ppl.json")});
    CHECK(ppl.summary()["perplexity"].get<double>() > 1.0);
    CHECK(json::parse(read_file(dir / "ppl.json"))["n_tokens"].get<int>() > 0);

    ok({"dataset", "balance", "--records", p("clean.tsv"), "--out", p("cls.tsv"), "--per-class", "10"});
    const auto ft = ok({"finetune", "cls", "--init", p("pre.ckpt"), "--out", p("cls.ckpt"), "--data", p("cls.tsv"),
                        "--set", "num_train_epochs=1", "--set", "max_seq_length=32"});
    CHECK(ft.summary()["labels"] == 3);
    const auto ev = ok({"eval", "cls", "--model", p("cls.ckpt"), "--data", p("cls.tsv"), "--out", p("report.json")});
    const auto report = json::parse(read_file(dir / "report.json"));
    for (const auto* key : {"accuracy", "per_class", "macro_avg", "weighted_avg"}) CHECK(report.contains(key));
    CHECK(report["total"] == 30);

    write_file(dir / "texts.txt", "markets and prices\ncourt rights\n");
    ok({"predict", "--model", p("cls.ckpt"), "--data", p("texts.txt"), "--out", p("pred.tsv")});
    const auto predictions = read_file(dir / "pred.tsv");
    CHECK(std::count(predictions.begin(), predictions.end(), '\n') == 2);

    write_file(dir / "ner.tsv", "we\tO\nuse\tO\nprices\tS-software\n\ncourt\tB-software\nrights\tE-software\n");
    ok({"finetune", "ner", "--init", p("pre.ckpt"), "--out", p("ner.ckpt"), "--data", p("ner.tsv"),
        "--set", "num_train_epochs=1"});
    const auto ner = ok({"eval", "ner", "--model", p("ner.ckpt"), "--data", p("ner.tsv")});
    CHECK(ner.summary().contains("f1"));

    write_file(dir / "bad_tags.tsv", "we\tO\nuse\tX-tool\n");
    const auto bad_tags = run({"finetune", "ner", "--init", p("pre.ckpt"), "--out", p("n2.ckpt"), "--data", p("bad_tags.tsv")});
    CHECK(bad_tags.status == 1);
    CHECK(json::parse(bad_tags.err)["message"].get<std::string>().find("line 2") != std::string::npos);

    write_file(dir / "a.txt", "x\nx\ny\ny\n");
    write_file(dir / "b.txt", "x\nx\ny\ny\n");
    CHECK(ok({"kappa", "--a", p("a.txt"), "--b", p("b.txt")}).summary()["kappa"] == 1.0);

    write_file(dir / "doc.txt", "First sentence. Second one here.\n");
    ok({"dataset", "sentences", "--in", p("doc.txt"), "--out", p("sent.txt")});
    CHECK(read_file(dir / "sent.txt") == "First sentence.\nSecond one here.\n");
  }
}
