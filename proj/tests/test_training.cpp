#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "slmw/error.hpp"
#include "slmw/training.hpp"

using namespace slmw;
using namespace slmw::training;
using slmw::testing::error_code;
using slmw::testing::letter_vocab;
using slmw::testing::tiny_checkpoint;

namespace {

tokenizer::EncodedSequence plain(std::size_t real_tokens, std::size_t pad = 0) {
  tokenizer::EncodedSequence s;
  s.ids.push_back(tokenizer::kClsId);
  for (std::size_t i = 0; i < real_tokens; ++i) s.ids.push_back(5 + static_cast<int>(i % 20));
  s.ids.push_back(tokenizer::kSepId);
  s.attention_mask.assign(s.ids.size(), 1);
  for (std::size_t i = 0; i < pad; ++i) {
    s.ids.push_back(tokenizer::kPadId);
    s.attention_mask.push_back(0);
  }
  s.segment_ids.assign(s.ids.size(), 0);
  s.word_alignment.assign(s.ids.size(), std::nullopt);
  return s;
}

std::vector<std::string> toy_corpus() {
  const std::vector<std::string> subjects = {"cat", "dog", "bird"};
  const std::vector<std::string> verbs = {"eats", "sees"};
  std::vector<std::string> lines;
  for (const auto& s : subjects) {
    for (const auto& v : verbs) lines.push_back("the " + s + " " + v + " the fish");
  }
  return lines;
}

TrainConfig quick_config(int epochs) {
  TrainConfig c;
  c.num_train_epochs = epochs;
  c.train_batch_size = 2;
  c.learning_rate = 5e-3;
  c.mask_rate = 0.3;
  c.max_seq_length = 32;
  return c;
}

}  // namespace

TEST_CASE("defaults follow the hyperparameter tables") {
  const auto pre = TrainConfig::pretraining();
  CHECK(pre.max_seq_length == 512);
  CHECK(pre.learning_rate == 2e-5);
  CHECK(pre.train_batch_size == 64);
  CHECK(pre.num_train_epochs == 2);
  CHECK(pre.mask_rate == 0.15);
  CHECK(pre.line_by_line);
  const auto fine = TrainConfig::finetuning();
  CHECK(fine.train_batch_size == 32);
  CHECK(fine.gradient_accumulation_steps == 4);
  CHECK(fine.eval_batch_size == 128);
  CHECK(fine.adam_epsilon == 1e-6);
}

TEST_CASE("config files parse and reject unknown keys") {
  std::istringstream in("# profile\nnum_train_epochs = 4\n\nlearning_rate=5e-5\nwarmup_steps=10\nline_by_line=false\n");
  const auto c = parse_config(in, TrainConfig::pretraining());
  CHECK(c.num_train_epochs == 4);
  CHECK(c.learning_rate == 5e-5);
  CHECK(c.warmup_steps == 10);
  CHECK_FALSE(c.line_by_line);

  std::istringstream unknown("epochs=3\n");
  CHECK(error_code([&] { parse_config(unknown, {}); }) == ErrorCode::kConfig);
  std::istringstream malformed("learning_rate=fast\n");
  CHECK(error_code([&] { parse_config(malformed, {}); }) == ErrorCode::kConfig);
  std::istringstream invalid("mask_rate=1\n");
  CHECK(error_code([&] { parse_config(invalid, {}); }) == ErrorCode::kConfig);

  TrainConfig round = TrainConfig::finetuning();
  round.warmup_steps = 7;
  round.seed = 1234567890123ULL;
  std::ostringstream out;
  for (const auto& [k, v] : to_key_values(round)) out << k << '=' << v << '\n';
  std::istringstream back(out.str());
  CHECK(parse_config(back, {}) == round);
  CHECK(config_keys().size() == to_key_values(round).size());
}

TEST_CASE("learning rate schedule") {
  TrainConfig c;
  c.learning_rate = 2e-5;
  c.warmup_steps = 100;
  CHECK(lr_at_step(c, 0, 1000) == 0.0);
  CHECK(lr_at_step(c, 50, 1000) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(lr_at_step(c, 100, 1000) == 2e-5);
  CHECK(lr_at_step(c, 550, 1000) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(lr_at_step(c, 1000, 1000) == 0.0);
  CHECK(error_code([&] { lr_at_step(c, 1001, 1000); }) == ErrorCode::kOutOfRange);
  CHECK(error_code([&] { lr_at_step(c, -1, 1000); }) == ErrorCode::kOutOfRange);
  CHECK(error_code([&] { lr_at_step(c, 10, 100); }).has_value());

  double peak = 0.0;
  std::int64_t at = -1;
  for (std::int64_t s = 0; s <= 1000; ++s) {
    const double lr = lr_at_step(c, s, 1000);
    if (lr > peak) {
      peak = lr;
      at = s;
    }
  }
  CHECK(peak == 2e-5);
  CHECK(at == 100);

  c.warmup_steps.reset();
  CHECK(c.resolved_warmup(1000) == 60);
  CHECK(c.resolved_warmup(10) == 1);
}

TEST_CASE("masking selects only real tokens") {
  const std::vector<tokenizer::EncodedSequence> batch = {plain(6, 3), plain(2)};
  SUBCASE("rate zero") {
    const auto m = mask_tokens(batch, {0.0}, 1, 30);
    CHECK(m.inputs == batch);
    CHECK(m.selected_count() == 0);
  }
  SUBCASE("rate one with every selection masked") {
    const auto m = mask_tokens(batch, {1.0, 1.0, 0.0}, 1, 30);
    CHECK(m.selected_count() == 8);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      for (std::size_t i = 0; i < batch[b].size(); ++i) {
        const bool real = batch[b].attention_mask[i] == 1 && batch[b].ids[i] >= 5;
        CHECK((m.inputs[b].ids[i] == tokenizer::kMaskId) == real);
        CHECK((m.labels[b][i] == batch[b].ids[i]) == real);
        if (!real) CHECK(m.labels[b][i] == tokenizer::kIgnoreLabel);
      }
    }
  }
  SUBCASE("selection rate concentrates") {
    const std::vector<tokenizer::EncodedSequence> big = {plain(10000)};
    const auto m = mask_tokens(big, {0.15}, 77, 30);
    CHECK(m.selected_count() >= 1350);
    CHECK(m.selected_count() <= 1650);
    std::size_t masked = 0, random = 0, kept = 0;
    for (std::size_t i = 0; i < big[0].size(); ++i) {
      if (m.labels[0][i] == tokenizer::kIgnoreLabel) continue;
      const int id = m.inputs[0].ids[i];
      if (id == tokenizer::kMaskId) {
        ++masked;
      } else if (id == big[0].ids[i]) {
        ++kept;
      } else {
        ++random;
        CHECK(id >= tokenizer::kNumSpecialTokens);
      }
    }
    const double n = static_cast<double>(m.selected_count());
    CHECK(masked / n == doctest::Approx(0.8).epsilon(0.08));
    CHECK(random + kept > 0);
    CHECK(mask_tokens(big, {0.15}, 77, 30).inputs == m.inputs);
  }
}

TEST_CASE("adam first step has magnitude lr") {
  Tensor x(Matrix::Constant(1, 1, 3.0), true);
  encoder::ModelParameters params;
  params.add("x", x);
  TrainConfig c;
  c.learning_rate = 0.01;
  c.warmup_steps = 0;
  auto state = make_optimizer_state(params, 10);
  const auto outcome = accumulate_loss(params, numeric::sum(numeric::mul(x, x)), state, c);
  CHECK(outcome.updated);
  CHECK(outcome.lr == 0.01);
  CHECK(3.0 - params.at("x").value()(0, 0) == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("zero gradients leave parameters unchanged") {
  Tensor x(Matrix::Constant(2, 2, 1.5), true);
  encoder::ModelParameters params;
  params.add("x", x);
  const Matrix before = x.value();
  TrainConfig c;
  c.warmup_steps = 0;
  auto state = make_optimizer_state(params, 5);
  accumulate_loss(params, numeric::sum(numeric::scale(x, 0.0)), state, c);
  CHECK(params.at("x").value() == before);
}

TEST_CASE("accumulating four micro-batches equals one averaged update") {
  std::mt19937_64 rng(2);
  const Tensor w0 = slmw::testing::random_tensor(3, 3, rng);
  std::vector<Tensor> data;
  for (int k = 0; k < 4; ++k) data.push_back(Tensor(slmw::testing::random_tensor(3, 3, rng).value()));

  TrainConfig c;
  c.learning_rate = 0.05;
  c.warmup_steps = 0;

  encoder::ModelParameters accumulated;
  accumulated.add("w", w0.clone());
  c.gradient_accumulation_steps = 4;
  auto s1 = make_optimizer_state(accumulated, 3);
  for (int k = 0; k < 4; ++k) {
    const Tensor& w = accumulated.at("w");
    const auto outcome = accumulate_loss(accumulated, numeric::sum(numeric::mul(w, data[k])), s1, c);
    CHECK(outcome.updated == (k == 3));
  }

  encoder::ModelParameters summed;
  summed.add("w", w0.clone());
  c.gradient_accumulation_steps = 1;
  auto s2 = make_optimizer_state(summed, 3);
  const Tensor& w = summed.at("w");
  Tensor total = numeric::mul(w, data[0]);
  for (int k = 1; k < 4; ++k) total = numeric::add(total, numeric::mul(w, data[k]));
  accumulate_loss(summed, numeric::scale(numeric::sum(total), 0.25), s2, c);

  CHECK((accumulated.at("w").value() - summed.at("w").value()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("non-finite loss is a divergence") {
  Tensor x(Matrix::Constant(1, 1, 1.0), true);
  encoder::ModelParameters params;
  params.add("x", x);
  TrainConfig c;
  auto state = make_optimizer_state(params, 10);
  const Tensor bad = numeric::scale(numeric::sum(x), std::nan(""));
  CHECK(error_code([&] { accumulate_loss(params, bad, state, c); }) == ErrorCode::kDivergence);
}

TEST_CASE("pretrain epochs, lineage and determinism") {
  const auto vocab = letter_vocab({"the", "cat", "dog", "bird", "eats", "sees", "fish"});
  const auto start = tiny_checkpoint(vocab);
  const auto corpus = toy_corpus();

  SUBCASE("zero epochs keep parameters") {
    const auto r = pretrain(corpus, start, quick_config(0));
    CHECK(r.losses.empty());
    CHECK(r.checkpoint.parameters == start.parameters);
  }
  SUBCASE("loss falls and runs repeat exactly") {
    const auto a = pretrain(corpus, start, quick_config(30));
    const auto b = pretrain(corpus, start, quick_config(30));
    CHECK(a.losses == b.losses);
    CHECK(a.checkpoint.parameters == b.checkpoint.parameters);
    REQUIRE(a.losses.size() > 80);
    REQUIRE(a.losses.size() <= 30 * 3);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 3; ++i) {
      first += a.losses[static_cast<std::size_t>(i)].loss;
      last += a.losses[a.losses.size() - 1 - static_cast<std::size_t>(i)].loss;
    }
    CHECK(last < first);
    CHECK(a.checkpoint.meta.source == encoder::checkpoint_id(start));
    CHECK(a.checkpoint.meta.step == static_cast<std::int64_t>(a.losses.size()));
    CHECK(a.losses.back().step == a.checkpoint.meta.step);
    CHECK(a.checkpoint.meta.epoch == 30);
    CHECK(start.parameters == tiny_checkpoint(vocab).parameters);
  }
  SUBCASE("continuing from a saved checkpoint advances the counters") {
    slmw::testing::TempDir dir;
    const auto first = pretrain(corpus, start, quick_config(1));
    encoder::save_checkpoint(first.checkpoint, dir / "a.ckpt");
    const auto loaded = encoder::load_checkpoint(dir / "a.ckpt");
    const auto second = pretrain(corpus, loaded, quick_config(1));
    CHECK(second.checkpoint.meta.step == first.checkpoint.meta.step + static_cast<std::int64_t>(second.losses.size()));
    CHECK(second.checkpoint.meta.epoch == 2);
    CHECK(second.losses.front().step == first.checkpoint.meta.step + 1);
    CHECK(second.losses.front().epoch == 2);
  }
  SUBCASE("errors") {
    CHECK(error_code([&] { pretrain({}, start, quick_config(1)); }) == ErrorCode::kEmptyInput);
    auto no_vocab = start;
    no_vocab.vocab.reset();
    CHECK(error_code([&] { pretrain(corpus, no_vocab, quick_config(1)); }).has_value());
  }
}

TEST_CASE("block examples concatenate the corpus") {
  const auto vocab = letter_vocab({"the", "cat"});
  TrainConfig c;
  c.line_by_line = false;
  c.max_seq_length = 6;
  const std::vector<std::string> lines = {"the cat the", "cat the"};
  const auto blocks = pretraining_examples(lines, vocab, c, 512);
  REQUIRE(blocks.size() == 2);
  CHECK(blocks[0].size() == 6);
  CHECK(blocks[1].size() == 3);
  c.line_by_line = true;
  CHECK(pretraining_examples(lines, vocab, c, 512).size() == 2);
}

TEST_CASE("loss csv layout") {
  const std::vector<LossRecord> losses = {{1, 1, 0.0, 2.5}, {2, 1, 1e-5, 2.25}};
  std::ostringstream out;
  write_loss_csv(out, losses);
  CHECK(out.str() == "step,epoch,lr,loss\n1,1,0,2.5\n2,1,1e-05,2.25\n");
}
