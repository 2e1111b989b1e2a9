#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "provoc/training.hpp"

using namespace provoc;

namespace {

std::string temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "provoc_train_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// random but deterministic utterances; no audio files involved
std::vector<Utterance> fake_dataset(const Config& cfg, const std::vector<std::string>& speakers,
                                    int per_speaker, uint64_t seed) {
  std::vector<Utterance> out;
  const char* texts[] = {"go red", "cat sun", "map tea", "pod sky"};
  int k = 0;
  for (const auto& spk : speakers) {
    for (int u = 0; u < per_speaker; ++u, ++k) {
      Utterance ut;
      ut.id = spk + "_u" + std::to_string(u);
      ut.speaker = spk;
      ut.transcript = texts[k % 4];
      ut.tokens = tokenize(ut.transcript).tokens;
      ut.frames = 6 + (k % 3);
      Rng rng(mix64(seed ^ static_cast<uint64_t>(k)));
      ut.mel.resize(static_cast<size_t>(ut.frames) * cfg.model.mel_dim);
      for (auto& v : ut.mel) v = rng.normal();
      out.push_back(std::move(ut));
    }
  }
  return out;
}

std::vector<const Utterance*> as_batch(const std::vector<Utterance>& data) {
  std::vector<const Utterance*> b;
  for (const auto& u : data) b.push_back(&u);
  return b;
}

std::vector<double> param_copy(const nn::ParameterStore& store, const std::string& name) {
  return store.get(name).data();
}

uint64_t prefix_checksum(const nn::ParameterStore& store, const std::string& prefix) {
  uint64_t h = kFnvOffset;
  for (const auto& [name, t] : store.all()) {
    if (name.rfind(prefix, 0) != 0) continue;
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(t.data().data(), t.size() * sizeof(double), h);
  }
  return h;
}

}  // namespace

TEST_CASE("noam schedule peaks exactly at warmup") {
  const int d = 128, w = 50;
  double prev = 0.0;
  for (long s = 1; s < w; ++s) {
    const double lr = noam_lr(s, d, w, 1.0);
    CHECK(lr > prev);
    prev = lr;
  }
  long argmax = 1;
  double best = 0.0;
  for (long s = 1; s <= 4 * w; ++s) {
    const double lr = noam_lr(s, d, w, 1.0);
    if (lr > best) {
      best = lr;
      argmax = s;
    }
  }
  CHECK(argmax == w);
  for (long s = w; s < 3 * w; ++s) CHECK(noam_lr(s, d, w, 1.0) >= noam_lr(s + 1, d, w, 1.0));

  // spot values against independently composed closed forms
  const double at1 = noam_lr(1, 1536, 4000, 1.0);
  const double want1 = 1.0 / (std::sqrt(1536.0) * 4000.0 * std::sqrt(4000.0));
  CHECK(std::abs(at1 - want1) / want1 < 1e-12);
  const double atw = noam_lr(4000, 1536, 4000, 1.0);
  const double wantw = 1.0 / std::sqrt(1536.0 * 4000.0);
  CHECK(std::abs(atw - wantw) / wantw < 1e-12);
  const double late = noam_lr(16000, 1536, 4000, 1.0);
  const double want_late = 1.0 / std::sqrt(1536.0 * 16000.0);
  CHECK(std::abs(late - want_late) / want_late < 1e-12);

  CHECK(noam_lr(7, 128, 50, 2.5) == Catch::Approx(2.5 * noam_lr(7, 128, 50, 1.0)).epsilon(1e-15));
  CHECK_THROWS_AS(noam_lr(0, 128, 50, 1.0), Error);
  CHECK_THROWS_AS(noam_lr(5, 0, 50, 1.0), Error);
}

TEST_CASE("adam reproduces two hand-computed steps") {
  nn::ParameterStore store;
  auto p = store.create("p", {2}, {1.0, 2.0});
  Adam adam(0.9, 0.98, 1e-9);
  auto all = [](const std::string&) { return true; };
  const double lr = 0.1;

  p.node()->ensure_grad();
  p.grad() = {0.5, -1.0};
  adam.step(store, lr, all);

  double m[2] = {0.0, 0.0}, v[2] = {0.0, 0.0}, val[2] = {1.0, 2.0};
  const double g1[2] = {0.5, -1.0};
  for (int i = 0; i < 2; ++i) {
    m[i] = 0.9 * m[i] + 0.1 * g1[i];
    v[i] = 0.98 * v[i] + 0.02 * g1[i] * g1[i];
    const double mhat = m[i] / (1.0 - 0.9);
    const double vhat = v[i] / (1.0 - 0.98);
    val[i] -= lr * mhat / (std::sqrt(vhat) + 1e-9);
  }
  CHECK(p.data()[0] == Catch::Approx(val[0]).margin(1e-15));
  CHECK(p.data()[1] == Catch::Approx(val[1]).margin(1e-15));

  p.grad() = {-0.25, 0.5};
  adam.step(store, lr, all);
  const double g2[2] = {-0.25, 0.5};
  for (int i = 0; i < 2; ++i) {
    m[i] = 0.9 * m[i] + 0.1 * g2[i];
    v[i] = 0.98 * v[i] + 0.02 * g2[i] * g2[i];
    const double mhat = m[i] / (1.0 - 0.9 * 0.9);
    const double vhat = v[i] / (1.0 - 0.98 * 0.98);
    val[i] -= lr * mhat / (std::sqrt(vhat) + 1e-9);
  }
  CHECK(p.data()[0] == Catch::Approx(val[0]).margin(1e-15));
  CHECK(p.data()[1] == Catch::Approx(val[1]).margin(1e-15));
  CHECK(adam.states().at("p").t == 2);
}

TEST_CASE("adam honours the include filter and frozen set") {
  nn::ParameterStore store;
  auto a = store.create("a", {1}, {1.0});
  auto b = store.create("b", {1}, {1.0});
  auto c = store.create("c", {1}, {1.0});
  for (auto t : {a, b, c}) {
    t.node()->ensure_grad();
    t.grad() = {1.0};
  }
  store.freeze_name("c");
  Adam adam(0.9, 0.98, 1e-9);
  adam.step(store, 0.1, [](const std::string& n) { return n == "a"; });
  CHECK(a.data()[0] < 1.0);
  CHECK(b.data()[0] == 1.0);
  CHECK(c.data()[0] == 1.0);
  CHECK(adam.states().count("a") == 1);
  CHECK(adam.states().count("b") == 0);
  CHECK(adam.states().count("c") == 0);
  // a skipped parameter resumes with an untouched step counter
  adam.step(store, 0.1, [](const std::string& n) { return n == "b"; });
  CHECK(adam.states().at("b").t == 1);
  CHECK(adam.states().at("a").t == 1);
}

TEST_CASE("gradient clipping rescales to the exact norm") {
  nn::ParameterStore store;
  auto a = store.create("a", {2}, {0.0, 0.0});
  a.node()->ensure_grad();
  a.grad() = {3.0, 4.0};
  auto all = [](const std::string&) { return true; };
  const double pre = clip_gradients(store, 1.0, all);
  CHECK(pre == 5.0);
  CHECK(a.grad()[0] == Catch::Approx(0.6).margin(1e-15));
  CHECK(a.grad()[1] == Catch::Approx(0.8).margin(1e-15));
  const double norm2 = std::sqrt(0.6 * 0.6 + 0.8 * 0.8);
  CHECK(norm2 == Catch::Approx(1.0).margin(1e-12));

  // below the threshold nothing moves
  a.grad() = {0.3, 0.4};
  CHECK(clip_gradients(store, 1.0, all) == 0.5);
  CHECK(a.grad()[0] == 0.3);
  CHECK(a.grad()[1] == 0.4);

  // excluded parameters neither count nor change
  auto b = store.create("b", {1}, {0.0});
  b.node()->ensure_grad();
  a.grad() = {3.0, 4.0};
  b.grad() = {100.0};
  const double pre2 = clip_gradients(store, 1.0, [](const std::string& n) { return n == "a"; });
  CHECK(pre2 == 5.0);
  CHECK(b.grad()[0] == 100.0);
}

TEST_CASE("synthesis loss combines hand-computed terms") {
  TrainingConfig tc;
  tc.w_mel_before = 2.0;
  tc.w_mel_after = 3.0;
  tc.w_stop = 0.5;
  tc.stop_pos_weight = 5.0;

  DecoderOutput out;
  out.mel_before = ag::Tensor::leaf({2, 2}, {1.0, 2.0, 3.0, 4.0}, false);
  out.mel_after = ag::Tensor::leaf({2, 2}, {1.5, 2.0, 2.0, 4.5}, false);
  out.stop_logits = ag::Tensor::leaf({2, 1}, {0.3, -0.7}, false);
  const std::vector<double> target = {1.0, 1.0, 2.0, 2.0};

  auto sl = synthesis_loss(out, target, 2, tc);
  const double mb = (0.0 + 1.0 + 1.0 + 2.0) / 4.0;
  const double ma = (0.5 + 1.0 + 0.0 + 2.5) / 4.0;
  auto softplus = [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); };
  // frame 0: target 0 weight 1; frame 1 (last): target 1 weight 5
  const double stop =
      (1.0 * (softplus(0.3) - 0.0) + 5.0 * (softplus(-0.7) - (-0.7))) / 2.0;
  CHECK(sl.mel_before == Catch::Approx(mb).margin(1e-12));
  CHECK(sl.mel_after == Catch::Approx(ma).margin(1e-12));
  CHECK(sl.stop == Catch::Approx(stop).margin(1e-12));
  CHECK(sl.total.scalar() ==
        Catch::Approx(2.0 * mb + 3.0 * ma + 0.5 * stop).margin(1e-12));

  // l2 variant
  TrainingConfig tc2 = tc;
  tc2.mel_loss = "l2";
  auto sl2 = synthesis_loss(out, target, 2, tc2);
  const double mb2 = (0.0 + 1.0 + 1.0 + 4.0) / 4.0;
  CHECK(sl2.mel_before == Catch::Approx(mb2).margin(1e-12));

  // rows past t_true are ignored
  DecoderOutput padded;
  padded.mel_before = ag::Tensor::leaf({4, 2}, {1.0, 2.0, 3.0, 4.0, 9.0, 9.0, 9.0, 9.0}, false);
  padded.mel_after = ag::Tensor::leaf({4, 2}, {1.5, 2.0, 2.0, 4.5, 9.0, 9.0, 9.0, 9.0}, false);
  padded.stop_logits = ag::Tensor::leaf({4, 1}, {0.3, -0.7, 9.0, 9.0}, false);
  auto slp = synthesis_loss(padded, target, 2, tc);
  CHECK(slp.total.scalar() == Catch::Approx(sl.total.scalar()).margin(1e-12));

  CHECK_THROWS_AS(synthesis_loss(out, target, 0, tc), Error);
  CHECK_THROWS_AS(synthesis_loss(out, target, 3, tc), Error);
}

TEST_CASE("checkpoints survive a save load save cycle byte for byte") {
  Config cfg = mini_config();
  Trainer tr(cfg, {"spk0", "spk1"});
  auto data = fake_dataset(tr.config(), {"spk0", "spk1"}, 2, 5);
  tr.run(data, 2);

  const std::string p1 = temp_path("a.ck"), p2 = temp_path("b.ck");
  auto ck = tr.checkpoint();
  CHECK(ck.step == 2);
  save_checkpoint(ck, p1);
  auto loaded = load_checkpoint(p1);
  save_checkpoint(loaded, p2);
  CHECK(slurp(p1) == slurp(p2));

  // a trainer restored from the checkpoint carries identical parameters
  Trainer tr2(loaded);
  CHECK(tr2.store().checksum() == tr.store().checksum());
  CHECK(tr2.step() == 2);
  CHECK(tr2.stage() == "pretrain");

  // and continues identically, crossing an encoder-update step on the way
  tr.run(data, 3);
  tr2.run(data, 3);
  CHECK(tr2.store().checksum() == tr.store().checksum());
  CHECK(tr2.schedule().calls() == tr.schedule().calls());
  CHECK(tr2.schedule().encoder_updates() == tr.schedule().encoder_updates());
}

TEST_CASE("checkpoint loader rejects corrupt files") {
  const std::string bad = temp_path("bad.ck");
  write_text_file(bad, "NOTMAGIC and some trailing bytes");
  CHECK_THROWS_AS(load_checkpoint(bad), Error);
  CHECK_THROWS_AS(load_checkpoint(temp_path("missing.ck")), Error);

  // truncation is detected
  Config cfg = mini_config();
  Trainer tr(cfg, {"spk0", "spk1"});
  const std::string full = temp_path("full.ck");
  save_checkpoint(tr.checkpoint(), full);
  auto bytes = slurp(full);
  write_text_file(temp_path("trunc.ck"), bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS(load_checkpoint(temp_path("trunc.ck")));
}

TEST_CASE("trainer restore validates the parameter inventory") {
  Config cfg = mini_config();
  Trainer tr(cfg, {"spk0", "spk1"});
  auto ck = tr.checkpoint();

  auto missing = ck;
  missing.params.erase("tts.mel_head.bias");
  CHECK_THROWS_AS(Trainer{missing}, Error);

  auto reshaped = ck;
  reshaped.params.at("tts.mel_head.bias").shape = {1};
  CHECK_THROWS_AS(Trainer{reshaped}, Error);

  auto wrong_speakers = ck;
  wrong_speakers.speakers.pop_back();
  CHECK_THROWS_AS(Trainer{wrong_speakers}, Error);
}

TEST_CASE("begin_finetune with a known target only flips the stage") {
  Config cfg = mini_config();
  Trainer tr(cfg, {"spk0", "spk1"});
  auto data = fake_dataset(tr.config(), {"spk0", "spk1"}, 2, 5);
  tr.run(data, 2);
  auto ck = tr.checkpoint();

  auto ft = begin_finetune(ck, "spk1");
  CHECK(ft.stage == "finetune");
  CHECK(ft.config.training.stage == "finetune");
  CHECK(ft.speakers == ck.speakers);
  CHECK(ft.config.model.n_speakers == 2);
  REQUIRE(ft.params.size() == ck.params.size());
  for (const auto& [name, td] : ck.params) {
    CHECK(ft.params.at(name).shape == td.shape);
    CHECK(ft.params.at(name).data == td.data);
  }
  CHECK(ft.adam.size() == ck.adam.size());

  // finetune -> finetune is illegal
  CHECK_THROWS_AS(begin_finetune(ft, "spk1"), Error);
}

TEST_CASE("begin_finetune registers an unseen target speaker") {
  Config cfg = mini_config();
  Trainer tr(cfg, {"spk0", "spk1"});
  auto data = fake_dataset(tr.config(), {"spk0", "spk1"}, 2, 5);
  tr.run(data, 2);  // populate optimizer state
  auto ck = tr.checkpoint();
  const int sd = cfg.model.speaker_dim;

  auto ft = begin_finetune(ck, "fresh");
  CHECK(ft.config.model.n_speakers == 3);
  REQUIRE(ft.speakers == std::vector<std::string>{"spk0", "spk1", "fresh"});

  const auto& table = ft.params.at("tts.speaker_table");
  REQUIRE(table.shape == std::vector<int>{3, sd});
  const auto& old = ck.params.at("tts.speaker_table");
  for (int d = 0; d < sd; ++d) {
    const double mean = (old.data[d] + old.data[sd + d]) / 2.0;
    CHECK(table.data[2 * static_cast<size_t>(sd) + d] == Catch::Approx(mean).margin(1e-12));
  }
  const auto& tad = ft.adam.at("tts.speaker_table");
  CHECK(tad.m.size() == static_cast<size_t>(3) * sd);
  CHECK(tad.t == ck.adam.at("tts.speaker_table").t);
  for (int d = 0; d < sd; ++d) {
    CHECK(tad.m[2 * static_cast<size_t>(sd) + d] == 0.0);
    CHECK(tad.v[2 * static_cast<size_t>(sd) + d] == 0.0);
  }

  const auto& w = ft.params.at("cls.out.weight");
  const auto& ow = ck.params.at("cls.out.weight");
  const int H = ow.shape[0];
  REQUIRE(w.shape == std::vector<int>{H, 3});
  for (int h = 0; h < H; ++h) {
    for (int s = 0; s < 2; ++s)
      CHECK(w.data[static_cast<size_t>(h) * 3 + s] == ow.data[static_cast<size_t>(h) * 2 + s]);
    CHECK(w.data[static_cast<size_t>(h) * 3 + 2] == 0.0);
  }
  const auto& b = ft.params.at("cls.out.bias");
  REQUIRE(b.shape == std::vector<int>{3});
  CHECK(b.data[2] == 0.0);
  CHECK(ft.adam.at("cls.out.weight").m.size() == static_cast<size_t>(H) * 3);
  for (double x : ft.adam.at("cls.out.weight").m) CHECK(x == 0.0);
  CHECK(ft.adam.at("cls.out.weight").t == ck.adam.at("cls.out.weight").t);

  // an explicit init vector wins over the mean
  std::vector<double> init(sd, 0.25);
  auto ft2 = begin_finetune(ck, "fresh", &init);
  const auto& t2 = ft2.params.at("tts.speaker_table");
  for (int d = 0; d < sd; ++d) CHECK(t2.data[2 * static_cast<size_t>(sd) + d] == 0.25);
  std::vector<double> short_init(sd - 1, 0.0);
  CHECK_THROWS_AS(begin_finetune(ck, "fresh2", &short_init), Error);

  // the widened checkpoint restores into a working trainer
  Trainer ftr(ft);
  CHECK(ftr.stage() == "finetune");
  CHECK(ftr.speaker_row("fresh") == 2);
}

TEST_CASE("fresh trainers with one seed are bit-identical") {
  Config cfg = mini_config();
  Trainer a(cfg, {"spk0", "spk1"});
  Trainer b(cfg, {"spk0", "spk1"});
  CHECK(a.store().checksum() == b.store().checksum());
  auto data = fake_dataset(a.config(), {"spk0", "spk1"}, 2, 5);
  a.run(data, 2);
  b.run(data, 2);
  CHECK(a.store().checksum() == b.store().checksum());

  Config other = cfg;
  other.training.seed = 999;
  Trainer c(other, {"spk0", "spk1"});
  CHECK(c.store().checksum() != a.store().checksum());
}

TEST_CASE("adversarial cadence updates the classifier always and the encoder fourth") {
  Config cfg = mini_config();
  REQUIRE(cfg.training.w_adversarial > 0.0);
  Trainer tr(cfg, {"spk0", "spk1"});
  auto data = fake_dataset(tr.config(), {"spk0", "spk1"}, 2, 5);
  auto batch = as_batch(data);
  for (int s = 1; s <= 8; ++s) {
    const uint64_t cls_before = prefix_checksum(tr.store(), "cls.");
    const uint64_t pros_before = prefix_checksum(tr.store(), "pros.");
    auto m = tr.train_step(batch);
    CHECK(prefix_checksum(tr.store(), "cls.") != cls_before);
    const bool pros_moved = prefix_checksum(tr.store(), "pros.") != pros_before;
    CHECK(pros_moved == (s % 4 == 0));
    CHECK(m.encoder_updated == (s % 4 == 0));
    CHECK(m.accuracy >= 0.0);
    CHECK(m.loss == Catch::Approx(m.mel_before + m.mel_after + m.stop +
                                  cfg.training.w_adversarial * m.adversarial)
                        .margin(1e-9));
  }
  CHECK(tr.schedule().calls() == 8);
  CHECK(tr.schedule().classifier_updates() == 8);
  CHECK(tr.schedule().encoder_updates() == 2);
}

TEST_CASE("disabling the adversarial loss frees the encoder every step") {
  Config cfg = mini_config();
  cfg.training.w_adversarial = 0.0;
  Trainer tr(cfg, {"spk0", "spk1"});
  auto data = fake_dataset(tr.config(), {"spk0", "spk1"}, 2, 5);
  auto batch = as_batch(data);
  for (int s = 0; s < 2; ++s) {
    const uint64_t pros_before = prefix_checksum(tr.store(), "pros.");
    auto m = tr.train_step(batch);
    CHECK(prefix_checksum(tr.store(), "pros.") != pros_before);
    CHECK(m.adversarial == 0.0);
    CHECK(m.encoder_updated);
  }
  CHECK(tr.schedule().calls() == 0);
}

TEST_CASE("finetuning freezes the prosody encoder and parks the classifier") {
  Config cfg = mini_config();
  Trainer pre(cfg, {"spk0", "spk1"});
  auto data = fake_dataset(pre.config(), {"spk0", "spk1"}, 2, 5);
  pre.run(data, 1);
  Trainer ft(begin_finetune(pre.checkpoint(), "spk1"));
  CHECK(ft.stage() == "finetune");
  CHECK(ft.store().is_frozen("pros.proj.weight"));

  auto single = fake_dataset(ft.config(), {"spk1"}, 3, 9);
  const uint64_t pros_before = prefix_checksum(ft.store(), "pros.");
  const uint64_t cls_before = prefix_checksum(ft.store(), "cls.");
  const uint64_t tts_before = prefix_checksum(ft.store(), "tts.");
  auto m = ft.train_step(as_batch(single));
  CHECK(prefix_checksum(ft.store(), "pros.") == pros_before);
  CHECK(prefix_checksum(ft.store(), "cls.") == cls_before);
  CHECK(prefix_checksum(ft.store(), "tts.") != tts_before);
  CHECK(m.adversarial == 0.0);
  CHECK_FALSE(m.encoder_updated);

  // dataset guards
  CHECK_THROWS_AS(ft.run(data, 1), Error);  // two speakers in finetune
  Config solo = mini_config();
  Trainer pre_solo(solo, {"only"});
  auto one_spk = fake_dataset(pre_solo.config(), {"only"}, 2, 5);
  CHECK_THROWS_AS(pre_solo.run(one_spk, 1), Error);  // adversarial needs two speakers
}

TEST_CASE("evaluate is read-only and reproducible") {
  Config cfg = mini_config();
  Trainer tr(cfg, {"spk0", "spk1"});
  auto data = fake_dataset(tr.config(), {"spk0", "spk1"}, 2, 5);
  const uint64_t before = tr.store().checksum();
  const double e1 = tr.evaluate(data);
  const double e2 = tr.evaluate(data);
  CHECK(e1 == e2);
  CHECK(std::isfinite(e1));
  CHECK(tr.store().checksum() == before);
  CHECK(tr.step() == 0);
}

TEST_CASE("training log emits one JSON record per interval") {
  Config cfg = mini_config();
  cfg.training.log_every = 1;
  Trainer tr(cfg, {"spk0", "spk1"});
  auto data = fake_dataset(tr.config(), {"spk0", "spk1"}, 2, 5);
  std::ostringstream log;
  tr.run(data, 2, &log);
  std::istringstream in(log.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    auto j = json::parse(line);
    CHECK(j.at("step").get<long>() == lines);
    CHECK(j.at("stage").get<std::string>() == "pretrain");
    CHECK(j.contains("loss"));
    CHECK(j.contains("lr"));
    CHECK(j.contains("accuracy"));
  }
  CHECK(lines == 2);
}

TEST_CASE("speaker bookkeeping validates names") {
  Config cfg = mini_config();
  Trainer tr(cfg, {"alpha", "beta"});
  CHECK(tr.speaker_row("alpha") == 0);
  CHECK(tr.speaker_row("beta") == 1);
  CHECK_THROWS_AS(tr.speaker_row("gamma"), Error);
  CHECK(tr.config().model.n_speakers == 2);
  CHECK_THROWS_AS(Trainer(cfg, {}), Error);
}
