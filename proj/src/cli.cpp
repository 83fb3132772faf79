#include "slmw/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "slmw/checkpoint.hpp"
#include "slmw/corpus.hpp"
#include "slmw/encoder.hpp"
#include "slmw/evaluation.hpp"
#include "slmw/tasks.hpp"
#include "slmw/tokenizer.hpp"
#include "slmw/training.hpp"
#include "slmw/utf8.hpp"

namespace slmw::cli {

namespace {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

struct TrainArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string loss_csv;
};

void add_train_options(CLI::App* cmd, TrainArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value config file");
  cmd->add_option("--set", args.overrides, "config override key=value (repeatable)");
  cmd->add_option("--seed", args.seed, "seed override");
  cmd->add_option("--loss-csv", args.loss_csv, "loss curve path (default: <out>.loss.csv)");
}

training::TrainConfig resolve_config(training::TrainConfig base, const TrainArgs& args) {
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw Error(ErrorCode::kNotFound, "cannot open config " + args.config_path);
    base = training::parse_config(in, base);
  }
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::kConfig, "--set expects key=value, got '" + kv + "'");
    training::set_config_value(base, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed) base.seed = *args.seed;
  base.validate();
  return base;
}

fs::path loss_csv_path(const TrainArgs& args, const std::string& out) {
  if (!args.loss_csv.empty()) return args.loss_csv;
  fs::path p(out);
  return p.replace_extension(".loss.csv");
}

ordered_json config_json(const training::TrainConfig& config) {
  ordered_json j;
  for (const auto& [k, v] : training::to_key_values(config)) j[k] = v;
  return j;
}

void write_report(const std::string& path, const ordered_json& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kNotFound, "cannot write " + path);
  out << report.dump(2) << '\n';
}

std::string config_help() {
  const auto pre = training::to_key_values(training::TrainConfig::pretraining());
  const auto fine = training::to_key_values(training::TrainConfig::finetuning());
  std::ostringstream s;
  s << "Config keys (defaults: pretrain / finetune):\n";
  for (std::size_t i = 0; i < pre.size(); ++i) {
    s << "  " << std::left << std::setw(29) << pre[i].first << std::setw(10) << pre[i].second
      << fine[i].second << '\n';
  }
  s << "Precedence: defaults < --config file < --set key=value < --seed.\n"
    << "Exit status: 0 ok, 1 other error, 2 missing file, 3 config error, 4 divergence.";
  return s.str();
}

tasks::LabelSet resolve_labels(const std::string& spec, std::span<const tasks::LabeledText> data) {
  if (spec == "jcr46") return tasks::jcr46();
  if (spec == "bpmrc") return tasks::bpmrc();
  if (spec == "auto") {
    std::set<std::string> seen;
    for (const auto& item : data) seen.insert(item.label);
    return tasks::LabelSet("auto", {seen.begin(), seen.end()});
  }
  std::vector<std::string> classes;
  for (auto& line : corpus::read_lines(spec)) classes.push_back(line);
  return tasks::LabelSet(fs::path(spec).filename().string(), std::move(classes));
}

std::vector<std::vector<std::string>> tokenized_lines(const std::string& path) {
  std::vector<std::vector<std::string>> out;
  for (const auto& line : corpus::read_lines(path)) out.push_back(utf8::split_whitespace(line));
  return out;
}

ordered_json error_json(std::string_view category, const std::string& message) {
  ordered_json j;
  j["error"] = category;
  j["message"] = message;
  return j;
}

}  // namespace

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound:
      return kExitMissingFile;
    case ErrorCode::kConfig:
      return kExitConfig;
    case ErrorCode::kDivergence:
      return kExitDivergence;
    default:
      return kExitFailure;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Domain-adaptive masked-LM pre-training and evaluation toolkit", "slmw"};
  app.require_subcommand(1);
  app.footer(config_help());
  ordered_json summary;

  // corpus
  auto* corpus_cmd = app.add_subcommand("corpus", "clean, describe and split corpora");
  corpus_cmd->require_subcommand(1);

  std::string clean_in, clean_out, clean_lines;
  bool clean_titles = false;
  auto* clean = corpus_cmd->add_subcommand("clean", "drop empty and duplicate abstracts, normalize text");
  clean->add_option("--in", clean_in, "records TSV")->required();
  clean->add_option("--out", clean_out, "cleaned records TSV")->required();
  clean->add_option("--lines", clean_lines, "also write one training line per record");
  clean->add_flag("--include-titles", clean_titles, "prefix each line with the title");
  clean->callback([&] {
    const auto records = corpus::load_records(clean_in);
    const auto kept = corpus::clean_records(records);
    std::ofstream o(clean_out, std::ios::binary);
    if (!o) throw Error(ErrorCode::kNotFound, "cannot write " + clean_out);
    corpus::write_records(o, kept);
    if (!clean_lines.empty()) corpus::write_lines(clean_lines, corpus::corpus_lines(kept, clean_titles));
    summary = {{"command", "corpus clean"},
               {"input_records", records.size()},
               {"kept", kept.size()},
               {"dropped", records.size() - kept.size()},
               {"out", clean_out}};
  });

  std::string stats_in, stats_records, stats_out;
  auto* stats = corpus_cmd->add_subcommand("stats", "document, word and category statistics");
  stats->add_option("--in", stats_in, "one document per line");
  stats->add_option("--records", stats_records, "records TSV (adds category shares)");
  stats->add_option("--out", stats_out, "full report path");
  stats->callback([&] {
    if (stats_in.empty() == stats_records.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "corpus stats needs exactly one of --in or --records");
    }
    ordered_json report;
    if (!stats_in.empty()) {
      const auto lines = corpus::read_lines(stats_in);
      report = corpus::to_json(corpus::compute_stats(lines));
    } else {
      const auto records = corpus::load_records(stats_records);
      const auto lines = corpus::corpus_lines(records, false);
      report = corpus::to_json(corpus::compute_stats(lines));
      report["categories"] = corpus::to_json(corpus::category_distribution(records));
    }
    if (!stats_out.empty()) write_report(stats_out, report);
    summary = {{"command", "corpus stats"}};
    summary.update(report);
    summary.erase("length_histogram");
    summary.erase("categories");
  });

  std::string split_in, split_train, split_test;
  corpus::SplitSpec split_spec;
  auto* split = corpus_cmd->add_subcommand("split", "seeded train/test split");
  split->add_option("--in", split_in, "one document per line")->required();
  split->add_option("--train", split_train, "train lines output")->required();
  split->add_option("--test", split_test, "test lines output")->required();
  split->add_option("--train-weight", split_spec.train_weight, "train share")->capture_default_str();
  split->add_option("--test-weight", split_spec.test_weight, "test share")->capture_default_str();
  split->add_option("--seed", split_spec.seed, "shuffle seed")->capture_default_str();
  split->callback([&] {
    const auto lines = corpus::read_lines(split_in);
    const auto parts = corpus::split_corpus(lines, split_spec);
    corpus::write_lines(split_train, parts.train);
    corpus::write_lines(split_test, parts.test);
    summary = {{"command", "corpus split"}, {"train", parts.train.size()}, {"test", parts.test.size()}};
  });

  // vocab
  auto* vocab_cmd = app.add_subcommand("vocab", "subword vocabulary");
  vocab_cmd->require_subcommand(1);
  std::string vocab_corpus, vocab_out;
  std::size_t vocab_size = 8000, vocab_min_freq = 1;
  auto* vocab_build = vocab_cmd->add_subcommand("build", "build a WordPiece vocabulary from a corpus");
  vocab_build->add_option("--corpus", vocab_corpus, "one document per line")->required();
  vocab_build->add_option("--size", vocab_size, "target vocabulary size")->capture_default_str();
  vocab_build->add_option("--min-frequency", vocab_min_freq, "minimum whole-word count")->capture_default_str();
  vocab_build->add_option("--out", vocab_out, "vocabulary file")->required();
  vocab_build->callback([&] {
    const auto lines = corpus::read_lines(vocab_corpus);
    const auto vocab = tokenizer::build_vocab(lines, vocab_size, vocab_min_freq);
    vocab.save(vocab_out);
    summary = {{"command", "vocab build"}, {"size", vocab.size()}, {"out", vocab_out}};
  });

  // init
  std::string init_vocab, init_out;
  encoder::EncoderConfig init_config;
  std::uint64_t init_seed = 42;
  bool init_untied = false;
  auto* init = app.add_subcommand("init", "write a randomly initialized encoder checkpoint");
  init->add_option("--vocab", init_vocab, "vocabulary file")->required();
  init->add_option("--out", init_out, "checkpoint path")->required();
  init->add_option("--layers", init_config.n_layers, "encoder layers")->capture_default_str();
  init->add_option("--hidden", init_config.hidden_size, "hidden size")->capture_default_str();
  init->add_option("--heads", init_config.n_heads, "attention heads")->capture_default_str();
  init->add_option("--ff", init_config.ff_size, "feed-forward size")->capture_default_str();
  init->add_option("--max-positions", init_config.max_positions, "position table size")->capture_default_str();
  init->add_option("--dropout", init_config.dropout, "dropout rate")->capture_default_str();
  init->add_option("--seed", init_seed, "initialization seed")->capture_default_str();
  init->add_flag("--untied", init_untied, "separate MLM output matrix");
  init->callback([&] {
    encoder::Checkpoint ckpt;
    ckpt.vocab = tokenizer::SubwordVocabulary::load(init_vocab);
    init_config.vocab_size = static_cast<int>(ckpt.vocab->size());
    init_config.tie_mlm_head = !init_untied;
    try {
      init_config.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::kConfig, e.what());
    }
    ckpt.config = init_config;
    ckpt.parameters = encoder::init_parameters(init_config, init_seed);
    encoder::save_checkpoint(ckpt, init_out);
    summary = {{"command", "init"},
               {"parameters", ckpt.parameters.scalar_count()},
               {"checkpoint_id", encoder::checkpoint_id(ckpt)},
               {"out", init_out}};
  });

  // pretrain
  TrainArgs pre_args;
  std::string pre_corpus, pre_init, pre_out;
  auto* pretrain = app.add_subcommand("pretrain", "continued masked-LM pre-training");
  add_train_options(pretrain, pre_args);
  pretrain->add_option("--corpus", pre_corpus, "one training line per row")->required();
  pretrain->add_option("--init", pre_init, "starting checkpoint")->required();
  pretrain->add_option("--out", pre_out, "output checkpoint")->required();
  pretrain->callback([&] {
    const auto config = resolve_config(training::TrainConfig::pretraining(), pre_args);
    const auto start = encoder::load_checkpoint(pre_init);
    const auto lines = corpus::read_lines(pre_corpus);
    const auto result = training::pretrain(lines, start, config);
    encoder::save_checkpoint(result.checkpoint, pre_out);
    const auto csv = loss_csv_path(pre_args, pre_out);
    training::save_loss_csv(csv, result.losses);
    summary = {{"command", "pretrain"},
               {"updates", result.losses.size()},
               {"final_loss", result.losses.empty() ? 0.0 : result.losses.back().loss},
               {"checkpoint_id", encoder::checkpoint_id(result.checkpoint)},
               {"out", pre_out},
               {"loss_csv", csv.string()},
               {"config", config_json(config)}};
  });

  // perplexity
  std::string ppl_model, ppl_data, ppl_out;
  evaluation::PerplexityOptions ppl_options;
  auto* perplexity = app.add_subcommand("perplexity", "pseudo-perplexity of a checkpoint on text");
  perplexity->add_option("--model", ppl_model, "checkpoint")->required();
  perplexity->add_option("--data", ppl_data, "one sentence per line")->required();
  perplexity->add_option("--max-seq-length", ppl_options.max_seq_length, "truncation length")->capture_default_str();
  perplexity->add_option("--batch-size", ppl_options.batch_size, "masked copies per pass")->capture_default_str();
  perplexity->add_option("--out", ppl_out, "report path");
  perplexity->callback([&] {
    const auto ckpt = encoder::load_checkpoint(ppl_model);
    if (!ckpt.vocab) throw Error(ErrorCode::kInvalidArgument, "checkpoint carries no vocabulary");
    const auto lines = corpus::read_lines(ppl_data);
    const auto result = evaluation::pseudo_perplexity(ckpt.model(), *ckpt.vocab, lines, ppl_options);
    auto report = evaluation::to_json(result);
    if (!ppl_out.empty()) write_report(ppl_out, report);
    summary = {{"command", "perplexity"}};
    summary.update(report);
  });

  // finetune
  auto* finetune = app.add_subcommand("finetune", "task fine-tuning");
  finetune->require_subcommand(1);
  TrainArgs ft_args;
  std::string ft_init, ft_data, ft_out, ft_labels = "auto";
  auto ft_common = [&](CLI::App* cmd) {
    add_train_options(cmd, ft_args);
    cmd->add_option("--init", ft_init, "starting checkpoint")->required();
    cmd->add_option("--out", ft_out, "output checkpoint")->required();
  };
  auto ft_finish = [&](const char* name, const tasks::FinetuneResult& result) {
    encoder::save_checkpoint(result.checkpoint, ft_out);
    const auto csv = loss_csv_path(ft_args, ft_out);
    training::save_loss_csv(csv, result.losses);
    summary = {{"command", name},
               {"updates", result.losses.size()},
               {"final_loss", result.losses.empty() ? 0.0 : result.losses.back().loss},
               {"labels", result.checkpoint.head->labels.size()},
               {"checkpoint_id", encoder::checkpoint_id(result.checkpoint)},
               {"out", ft_out},
               {"loss_csv", csv.string()}};
  };
  auto* ft_cls = finetune->add_subcommand("cls", "sequence classification");
  ft_common(ft_cls);
  ft_cls->add_option("--data", ft_data, "label<TAB>text file")->required();
  ft_cls->add_option("--labels", ft_labels, "jcr46, bpmrc, auto, or a file of class names")->capture_default_str();
  ft_cls->callback([&] {
    const auto config = resolve_config(training::TrainConfig::finetuning(), ft_args);
    const auto start = encoder::load_checkpoint(ft_init);
    const auto data = tasks::load_labeled(ft_data);
    const auto labels = resolve_labels(ft_labels, data);
    ft_finish("finetune cls", tasks::finetune_classifier(start, data, config, labels));
  });
  auto* ft_ner = finetune->add_subcommand("ner", "BMES software-entity tagging");
  ft_common(ft_ner);
  ft_ner->add_option("--data", ft_data, "token<TAB>tag file")->required();
  ft_ner->callback([&] {
    const auto config = resolve_config(training::TrainConfig::finetuning(), ft_args);
    const auto start = encoder::load_checkpoint(ft_init);
    const auto data = tasks::load_tagged(ft_data);
    ft_finish("finetune ner", tasks::finetune_tagger(start, data, config));
  });

  // eval
  auto* eval = app.add_subcommand("eval", "score a fine-tuned checkpoint against gold data");
  eval->require_subcommand(1);
  std::string ev_model, ev_data, ev_out;
  std::size_t ev_max_len = 512, ev_batch = 128;
  auto ev_common = [&](CLI::App* cmd) {
    cmd->add_option("--model", ev_model, "fine-tuned checkpoint")->required();
    cmd->add_option("--out", ev_out, "report path");
    cmd->add_option("--max-seq-length", ev_max_len, "truncation length")->capture_default_str();
    cmd->add_option("--batch-size", ev_batch, "prediction batch size")->capture_default_str();
  };
  auto* ev_cls = eval->add_subcommand("cls", "classification report");
  ev_common(ev_cls);
  ev_cls->add_option("--data", ev_data, "label<TAB>text file")->required();
  ev_cls->callback([&] {
    const auto ckpt = encoder::load_checkpoint(ev_model);
    const auto data = tasks::load_labeled(ev_data);
    std::vector<std::string> texts, gold;
    for (const auto& item : data) {
      texts.push_back(item.text);
      gold.push_back(item.label);
    }
    const auto pred = tasks::predict_labels(ckpt, texts, ev_max_len, ev_batch);
    const std::vector<std::string> classes = ckpt.head->labels;
    const auto report = evaluation::to_json(evaluation::classification_report(gold, pred, classes));
    if (!ev_out.empty()) write_report(ev_out, report);
    summary = {{"command", "eval cls"},
               {"samples", gold.size()},
               {"accuracy", report["accuracy"]},
               {"macro_f1", report["macro_avg"]["f1"]},
               {"weighted_f1", report["weighted_avg"]["f1"]}};
  });
  auto* ev_ner = eval->add_subcommand("ner", "entity-level precision, recall and F1");
  ev_common(ev_ner);
  ev_ner->add_option("--data", ev_data, "token<TAB>tag file")->required();
  ev_ner->callback([&] {
    const auto ckpt = encoder::load_checkpoint(ev_model);
    const auto gold = tasks::load_tagged(ev_data);
    std::vector<std::vector<std::string>> tokens, gold_tags;
    std::vector<std::vector<Span>> gold_spans, pred_spans;
    for (const auto& s : gold) {
      tokens.push_back(s.tokens);
      gold_tags.push_back(s.tags);
      gold_spans.push_back(tasks::tags_to_spans(s, tasks::TagMode::kStrict).spans);
    }
    const auto pred = tasks::predict_tags(ckpt, tokens, ev_max_len, ev_batch);
    std::size_t repairs = 0;
    for (const auto& p : pred) {
      auto decoded = tasks::tags_to_spans(p, tasks::TagMode::kLenient);
      repairs += decoded.repairs.size();
      pred_spans.push_back(std::move(decoded.spans));
    }
    ordered_json report;
    report["entity"] = evaluation::to_json(evaluation::entity_prf(gold_spans, pred_spans));
    report["token"] = evaluation::to_json(evaluation::token_prf(gold_tags, pred));
    report["sentences"] = gold.size();
    report["prediction_repairs"] = repairs;
    if (!ev_out.empty()) write_report(ev_out, report);
    summary = {{"command", "eval ner"},
               {"sentences", gold.size()},
               {"precision", report["entity"]["precision"]},
               {"recall", report["entity"]["recall"]},
               {"f1", report["entity"]["f1"]}};
  });

  // predict
  std::string pr_model, pr_data, pr_out;
  std::size_t pr_max_len = 512, pr_batch = 128;
  auto* predict = app.add_subcommand("predict", "label texts or tag tokenized sentences");
  predict->add_option("--model", pr_model, "fine-tuned checkpoint")->required();
  predict->add_option("--data", pr_data, "one text (or whitespace-tokenized sentence) per line")->required();
  predict->add_option("--out", pr_out, "label<TAB>text or token<TAB>tag output")->required();
  predict->add_option("--max-seq-length", pr_max_len, "truncation length")->capture_default_str();
  predict->add_option("--batch-size", pr_batch, "prediction batch size")->capture_default_str();
  predict->callback([&] {
    const auto ckpt = encoder::load_checkpoint(pr_model);
    if (!ckpt.head) throw Error(ErrorCode::kInvalidArgument, "checkpoint has no task head");
    std::size_t n = 0;
    if (ckpt.head->kind == encoder::HeadKind::kClassifier) {
      const auto texts = corpus::read_lines(pr_data);
      const auto labels = tasks::predict_labels(ckpt, texts, pr_max_len, pr_batch);
      std::vector<tasks::LabeledText> items;
      for (std::size_t i = 0; i < texts.size(); ++i) items.push_back({texts[i], labels[i]});
      tasks::save_labeled(pr_out, items);
      n = items.size();
    } else {
      const auto sentences = tokenized_lines(pr_data);
      const auto tags = tasks::predict_tags(ckpt, sentences, pr_max_len, pr_batch);
      std::vector<tasks::TaggedSentence> tagged;
      for (std::size_t i = 0; i < sentences.size(); ++i) tagged.push_back({sentences[i], tags[i]});
      tasks::save_tagged(pr_out, tagged);
      n = tagged.size();
    }
    summary = {{"command", "predict"},
               {"kind", ckpt.head->kind == encoder::HeadKind::kClassifier ? "classifier" : "tagger"},
               {"items", n},
               {"out", pr_out}};
  });

  // dataset
  auto* dataset = app.add_subcommand("dataset", "task dataset assembly");
  dataset->require_subcommand(1);
  std::string bal_records, bal_out, bal_issn, bal_field = "abstract", bal_classes;
  tasks::BalanceOptions bal_options;
  bool bal_each = false;
  auto* balance = dataset->add_subcommand("balance", "per-class balanced classification dataset");
  balance->add_option("--records", bal_records, "records TSV")->required();
  balance->add_option("--out", bal_out, "label<TAB>text output")->required();
  balance->add_option("--per-class", bal_options.per_class, "samples per class")->capture_default_str();
  balance->add_option("--seed", bal_options.seed, "sampling seed")->capture_default_str();
  balance->add_option("--field", bal_field, "title, abstract or both")
      ->check(CLI::IsMember({"title", "abstract", "both"}))
      ->capture_default_str();
  balance->add_option("--issn-map", bal_issn, "issn<TAB>category file");
  balance->add_option("--classes", bal_classes, "jcr46, bpmrc, or a file of class names");
  balance->add_flag("--each-category", bal_each, "one sample pool entry per listed category");
  balance->add_flag("--strict", bal_options.strict, "fail on classes with too few records");
  balance->callback([&] {
    const auto records = corpus::load_records(bal_records);
    bal_options.field = bal_field == "title"      ? tasks::TextField::kTitle
                        : bal_field == "abstract" ? tasks::TextField::kAbstract
                                                  : tasks::TextField::kTitleAndAbstract;
    bal_options.multi_category = bal_each ? tasks::MultiCategory::kEach : tasks::MultiCategory::kFirst;
    if (!bal_issn.empty()) bal_options.issn_categories = tasks::load_issn_map(bal_issn);
    if (!bal_classes.empty()) bal_options.classes = resolve_labels(bal_classes, {}).classes();
    const auto result = tasks::build_balanced_dataset(records, bal_options);
    tasks::save_labeled(bal_out, result.items);
    ordered_json skipped = ordered_json::object();
    for (const auto& [name, available] : result.skipped) skipped[name] = available;
    summary = {{"command", "dataset balance"},
               {"items", result.items.size()},
               {"skipped", skipped},
               {"out", bal_out}};
  });

  std::string sent_in, sent_out;
  std::size_t sent_max = tasks::kSentenceMaxChars;
  auto* sentences = dataset->add_subcommand("sentences", "split documents into sentences");
  sentences->add_option("--in", sent_in, "one document per line")->required();
  sentences->add_option("--out", sent_out, "one sentence per line")->required();
  sentences->add_option("--max-chars", sent_max, "sentence length cap in characters")->capture_default_str();
  sentences->callback([&] {
    std::vector<std::string> all;
    for (const auto& doc : corpus::read_lines(sent_in)) {
      for (auto& s : tasks::sentence_split(doc, sent_max)) all.push_back(std::move(s));
    }
    corpus::write_lines(sent_out, all);
    summary = {{"command", "dataset sentences"}, {"sentences", all.size()}, {"out", sent_out}};
  });

  // kappa
  std::string kappa_a, kappa_b;
  auto* kappa = app.add_subcommand("kappa", "Cohen's kappa between two annotations");
  kappa->add_option("--a", kappa_a, "first annotator: one label per line, or a tag file")->required();
  kappa->add_option("--b", kappa_b, "second annotator, same layout")->required();
  kappa->callback([&] {
    auto load = [](const std::string& path) {
      std::vector<std::string> labels;
      std::ifstream in(path, std::ios::binary);
      if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + path);
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.rfind('\t');
        labels.push_back(tab == std::string::npos ? line : line.substr(tab + 1));
      }
      return labels;
    };
    const auto a = load(kappa_a);
    const auto b = load(kappa_b);
    summary = {{"command", "kappa"}, {"items", a.size()}, {"kappa", evaluation::cohen_kappa(a, b)}};
  });

  std::vector<std::string> argv_storage{"slmw"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e, out, err);
    }
    err << error_json("usage", e.what()).dump() << '\n';
    return kExitFailure;
  } catch (const Error& e) {
    err << error_json(to_string(e.code()), e.what()).dump() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << error_json("internal", e.what()).dump() << '\n';
    return kExitFailure;
  }
  out << summary.dump() << '\n';
  return kExitOk;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace slmw::cli
