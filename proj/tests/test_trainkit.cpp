#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtsf/synthgen.hpp"
#include "mtsf/trainkit.hpp"
#include "testutil.hpp"

using namespace mtsf;
using nlohmann::json;
using synthgen::GenConfig;
using testutil::TempDir;

TEST_CASE("cosine schedule endpoints") {
  CHECK(cosine_lr(0, 100, 0.1, 0.001) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(cosine_lr(100, 100, 0.1, 0.001) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(cosine_lr(50, 100, 0.1, 0.001) == doctest::Approx(0.0505).epsilon(1e-12));
  CHECK(cosine_lr(25, 100, 1.0, 0.0) ==
        doctest::Approx(0.5 * (1.0 + std::cos(M_PI * 0.25))).epsilon(1e-12));
  // degenerate and out-of-range steps
  CHECK(cosine_lr(0, 0, 0.1, 0.0) == 0.1);
  CHECK(cosine_lr(150, 100, 0.1, 0.001) == doctest::Approx(0.001).epsilon(1e-12));
  // monotone non-increasing along the run
  double prev = 1e9;
  for (int s = 0; s <= 40; ++s) {
    const double lr = cosine_lr(s, 40, 0.01, 1e-5);
    CHECK(lr <= prev + 1e-15);
    prev = lr;
  }
}

TEST_CASE("optimizer matches an independent scalar recurrence") {
  const double lr = 0.01, wd = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Rng rng(6001);

  nn::Param<double> pa, pb;
  pa.init_uniform(3, 4, 4, rng);
  pb.init_uniform(1, 5, 5, rng);
  nn::ParamRefs<double> params{&pa, &pb};

  // plain per-element recurrence, written separately from the vector path
  std::vector<double> w, m, v;
  for (auto* p : params)
    for (size_t k = 0; k < p->w.size(); ++k) {
      w.push_back(p->w.data()[k]);
      m.push_back(0.0);
      v.push_back(0.0);
    }

  AdamState<double> opt;
  opt.init(params);
  for (int it = 1; it <= 7; ++it) {
    size_t off = 0;
    for (auto* p : params)
      for (size_t k = 0; k < p->w.size(); ++k) {
        const double g = rng.next_range(-1.0, 1.0);
        p->g.data()[k] = g;
        m[off] = b1 * m[off] + (1 - b1) * g;
        v[off] = b2 * v[off] + (1 - b2) * g * g;
        const double mhat = m[off] / (1 - std::pow(b1, it));
        const double vhat = v[off] / (1 - std::pow(b2, it));
        w[off] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * w[off]);
        ++off;
      }
    opt.update(params, lr, wd, b1, b2, eps);
    CHECK(opt.step == it);
    off = 0;
    for (auto* p : params)
      for (size_t k = 0; k < p->w.size(); ++k, ++off)
        CHECK(p->w.data()[k] == doctest::Approx(w[off]).epsilon(1e-12));
  }
}

TEST_CASE("run config JSON") {
  SUBCASE("canonical round-trip") {
    RunConfig cfg;
    cfg.model.n_views = 5;
    cfg.model.modality = Modality::kVisualOnly;
    cfg.model.fusion = FusionStrategy::kConcat;
    cfg.loss.beta2 = 0.25;
    cfg.loss.mode = LossMode::kBce;
    cfg.lr = 0.123;
    cfg.batch_size = 3;
    cfg.seed = 99;
    cfg.jitter = false;
    cfg.map_s_mode = MapSampleMode::kFlattened;
    cfg.data_dir = "/tmp/x";
    cfg.eval_split = "val";
    const RunConfig back = run_config_from_json(run_config_to_json(cfg));
    CHECK(run_config_to_json(back) == run_config_to_json(cfg));
    CHECK(back.model.n_views == 5);
    CHECK(back.model.modality == Modality::kVisualOnly);
    CHECK(back.loss.mode == LossMode::kBce);
    CHECK(back.lr == 0.123);
    CHECK(back.jitter == false);
    CHECK(back.map_s_mode == MapSampleMode::kFlattened);
    CHECK(back.eval_split == "val");
  }
  SUBCASE("missing keys keep defaults") {
    const RunConfig cfg = run_config_from_json(R"({"optim":{"lr":0.5}})");
    CHECK(cfg.lr == 0.5);
    CHECK(cfg.epochs == RunConfig{}.epochs);
    CHECK(cfg.model.n_views == RunConfig{}.model.n_views);
    const RunConfig empty = run_config_from_json("{}");
    CHECK(run_config_to_json(empty) == run_config_to_json(RunConfig{}));
  }
  SUBCASE("unknown keys and sections are rejected") {
    try {
      run_config_from_json(R"({"optim":{"lr":0.5,"momentum":0.9}})");
      FAIL_CHECK("expected rejection");
    } catch (const format_error& e) {
      CHECK(std::string(e.what()).find("optim.momentum") != std::string::npos);
    }
    CHECK_THROWS_AS(run_config_from_json(R"({"sched":{}})"), format_error);
    CHECK_THROWS_AS(run_config_from_json("[1,2]"), format_error);
    CHECK_THROWS_AS(run_config_from_json("{nope"), format_error);
    CHECK_THROWS_AS(run_config_from_json(R"({"model":{"fusion":"avg"}})"), std::invalid_argument);
  }
  SUBCASE("file loading") {
    TempDir dir("cfg");
    CHECK_THROWS_AS(load_run_config(dir.str() + "/missing.json"), storage_error);
    std::ofstream(dir.str() + "/c.json") << R"({"run":{"seed":4}})";
    CHECK(load_run_config(dir.str() + "/c.json").seed == 4);
  }
}

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.n_views = 2;
  c.n_classes = 3;
  c.t = 4;
  c.d = 1;
  c.h = 8;
  c.w = 8;
  c.f = 6;
  c.patch = 4;
  c.d_a = 4;
  c.d_v = 4;
  c.d_t = 8;
  c.audio_layers = c.visual_layers = 1;
  c.temporal_layers = 1;
  c.ffn_mult = 2;
  c.audio_heads = c.visual_heads = 2;
  c.temporal_heads = c.fusion_heads = 2;
  return c;
}

GenConfig tiny_gen() {
  GenConfig g;
  g.n_views = 2;
  g.t_raw = 16;
  g.n_classes = 3;
  g.n_events = 2;
  g.d = 1;
  g.h = 8;
  g.w = 8;
  g.f = 6;
  g.signature_mode = synthgen::SignatureMode::kBoth;
  g.noise_sigma = 0.3;
  return g;
}

// 10 episodes on disk, 8 train + 2 test, ready for train_run
void make_dataset(const std::string& dir) {
  const auto manifest = synthgen::generate_dataset(10, tiny_gen(), 42, dir);
  std::map<std::string, std::vector<std::string>> splits;
  for (int i = 0; i < 8; ++i) splits["train"].push_back(manifest.episode_ids[i]);
  for (int i = 8; i < 10; ++i) splits["test"].push_back(manifest.episode_ids[i]);
  write_splits(dir + "/splits.json", splits);
}

RunConfig tiny_run(const std::string& data, const std::string& out) {
  RunConfig cfg;
  cfg.model = tiny_model();
  cfg.lr = 3e-3;
  cfg.lr_min = 1e-4;
  cfg.weight_decay = 1e-4;
  cfg.batch_size = 4;
  cfg.epochs = 10;
  cfg.seed = 7;
  cfg.jitter = true;
  cfg.eval_every = 5;
  cfg.data_dir = data;
  cfg.split_file = data + "/splits.json";
  cfg.out_dir = out;
  return cfg;
}

}  // namespace

TEST_CASE("split loading") {
  TempDir dir("load");
  make_dataset(dir.str());
  const auto train = load_split_episodes(dir.str(), dir.str() + "/splits.json", "train");
  REQUIRE(train.size() == 8);
  CHECK(train[0].id == "ep00000");
  CHECK(train[7].id == "ep00007");
  CHECK(train[0].t_raw == 16);
  CHECK_THROWS_AS(load_split_episodes(dir.str(), dir.str() + "/splits.json", "val"),
                  std::invalid_argument);
}

TEST_CASE("every parameter group learns from a mixed batch") {
  TempDir dir("grads");
  make_dataset(dir.str());
  const auto eps = load_split_episodes(dir.str(), dir.str() + "/splits.json", "train");

  Model<float> model;
  model.init(tiny_model(), 11);
  model.zero_grads();

  const Episode& ep = eps[0];
  const SampledEpisode se = sample_episode(ep, 4);
  const auto in = model.make_input(ep, se.frame_idx);
  Model<float>::ItemCache cache;
  const auto out = model.forward(in, cache);

  // the sequence row must contain both polarities for its loss to bite
  int pos = 0;
  for (uint8_t l : se.seq_label) pos += l;
  REQUIRE(pos >= 1);
  REQUIRE(pos < 3);

  Mat<uint8_t> flab = se.frame_labels;
  Mat<uint8_t> slab(1, 3);
  for (int j = 0; j < 3; ++j) slab(0, j) = se.seq_label[j];
  Mat<float> gf, gq, gh;
  combined_score_loss<float>(out.frame_logits, flab, 1.0f, 1.0f, 1.0f, LossMode::kTwoWay,
                             nullptr, nullptr, &gf);
  combined_score_loss<float>(out.seq_logits, slab, 1.0f, 1.0f, 1.0f, LossMode::kTwoWay, nullptr,
                             nullptr, &gq);
  Mat<float> hum(2, 4);
  for (int v = 0; v < 2; ++v)
    for (int t = 0; t < 4; ++t) hum(v, t) = out.human_probs(v, t);
  bce_prob_loss(hum, se.human, &gh);

  model.backward(cache, gf, gq, gh);
  for (auto* p : model.params) {
    double norm = 0;
    for (size_t i = 0; i < p->g.size(); ++i)
      norm += static_cast<double>(p->g.data()[i]) * p->g.data()[i];
    CAPTURE(p->name);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("evaluation") {
  TempDir dir("eval");
  make_dataset(dir.str());
  const auto test_eps = load_split_episodes(dir.str(), dir.str() + "/splits.json", "test");

  Model<float> model;
  model.init(tiny_model(), 3);

  SUBCASE("deterministic across calls") {
    const EvalReport a = evaluate(model, test_eps, MapSampleMode::kExample);
    const EvalReport b = evaluate(model, test_eps, MapSampleMode::kExample);
    CHECK(a.frame_map_c == b.frame_map_c);
    CHECK(a.frame_map_s == b.frame_map_s);
    CHECK(a.seq_map_c == b.seq_map_c);
    CHECK(a.seq_map_s == b.seq_map_s);
    CHECK(a.n_episodes == 2);
  }

  SUBCASE("constant logits reduce to the tie-ranking baseline") {
    for (auto* p : model.params) p->w.fill(0.0f);  // all logits collapse to 0
    const EvalReport r = evaluate(model, test_eps, MapSampleMode::kExample);

    const int t = 4, c = 3, s = static_cast<int>(test_eps.size());
    Mat<double> zeros(s * t, c);
    Mat<uint8_t> labels(s * t, c);
    Mat<double> seq_zeros(s, c);
    Mat<uint8_t> seq_labels(s, c);
    for (int i = 0; i < s; ++i) {
      const SampledEpisode se = sample_episode(test_eps[i], t);
      for (int ft = 0; ft < t; ++ft)
        for (int j = 0; j < c; ++j) labels(i * t + ft, j) = se.frame_labels(ft, j);
      for (int j = 0; j < c; ++j) seq_labels(i, j) = se.seq_label[j];
    }
    CHECK(r.frame_map_c == map_classwise(zeros, labels, nullptr));
    CHECK(r.frame_map_s == map_samplewise(zeros, labels, MapSampleMode::kExample));
    CHECK(r.seq_map_c == map_classwise(seq_zeros, seq_labels, nullptr));
  }

  SUBCASE("empty split is an error") {
    CHECK_THROWS_AS(evaluate(model, {}, MapSampleMode::kExample), std::invalid_argument);
  }
}

TEST_CASE("training run: loss decreases, log is well-formed, checkpoint lands") {
  TempDir dir("train");
  make_dataset(dir.str());
  const RunConfig cfg = tiny_run(dir.str(), dir.str() + "/out");

  Model<float> model;
  const TrainResult res = train_run(cfg, model);
  REQUIRE(res.epochs.size() == 10);
  CHECK(res.steps == 20);  // 8 episodes / batch 4 = 2 steps x 10 epochs
  CHECK(res.epochs.back().total < res.epochs.front().total);
  CHECK(res.eval_valid);
  CHECK(res.final_eval.n_episodes == 2);

  // one JSON object per epoch with the loss components; eval fields appear
  // on eval epochs only
  std::ifstream log(dir.str() + "/out/train_log.jsonl");
  REQUIRE(log.good());
  std::string line;
  int n = 0;
  while (std::getline(log, line)) {
    ++n;
    const json j = json::parse(line);
    CHECK(j.at("epoch") == n);
    CHECK(j.contains("step"));
    CHECK(j.contains("lr"));
    CHECK(j.contains("loss_total"));
    CHECK(j.contains("loss_human"));
    CHECK(j.contains("loss_frame_sample"));
    CHECK(j.contains("loss_frame_class"));
    CHECK(j.contains("loss_seq_sample"));
    CHECK(j.contains("loss_seq_class"));
    CHECK(j.contains("eval_frame_map_c") == (n % 5 == 0));
  }
  CHECK(n == 10);

  // config echo and final checkpoint
  CHECK(std::filesystem::exists(dir.str() + "/out/config.json"));
  Model<float> loaded;
  AdamState<float> opt;
  const CheckpointInfo info = load_checkpoint(dir.str() + "/out/checkpoint", loaded, opt);
  CHECK(info.epochs_completed == 10);
  CHECK(opt.step == 20);
  REQUIRE(loaded.params.size() == model.params.size());
  for (size_t i = 0; i < model.params.size(); ++i)
    for (size_t k = 0; k < model.params[i]->w.size(); ++k)
      CHECK(loaded.params[i]->w.data()[k] == model.params[i]->w.data()[k]);
}

TEST_CASE("checkpoint round-trip faults") {
  TempDir dir("ckptbad");
  make_dataset(dir.str());
  RunConfig cfg = tiny_run(dir.str(), dir.str() + "/out");
  cfg.epochs = 1;
  Model<float> model;
  train_run(cfg, model);
  const std::string ck = dir.str() + "/out/checkpoint";

  SUBCASE("missing parameter file") {
    std::filesystem::remove(ck + "/params/heads.seq.b.mtsf");
    Model<float> m2;
    AdamState<float> o2;
    CHECK_THROWS_AS(load_checkpoint(ck, m2, o2), storage_error);
  }
  SUBCASE("tampered parameter list") {
    json j;
    std::ifstream(ck + "/optim.json") >> j;
    j["params"].erase(j["params"].size() - 1);
    std::ofstream(ck + "/optim.json") << j.dump();
    Model<float> m2;
    AdamState<float> o2;
    CHECK_THROWS_AS(load_checkpoint(ck, m2, o2), format_error);
  }
  SUBCASE("missing directory") {
    Model<float> m2;
    AdamState<float> o2;
    CHECK_THROWS_AS(load_checkpoint(dir.str() + "/nowhere", m2, o2), storage_error);
  }
}

TEST_CASE("interrupted run resumes bit-exactly") {
  TempDir dir("resume");
  make_dataset(dir.str());

  // one uninterrupted run over the full horizon
  RunConfig cfg_a = tiny_run(dir.str(), dir.str() + "/straight");
  cfg_a.epochs = 6;
  cfg_a.eval_every = 3;
  Model<float> ma;
  const TrainResult ra = train_run(cfg_a, ma);

  // the same run stopped after epoch 3, then resumed to the end
  RunConfig cfg_b = cfg_a;
  cfg_b.out_dir = dir.str() + "/half";
  Model<float> mb1;
  const TrainResult rb1 = train_run(cfg_b, mb1, "", /*stop_after=*/3);
  CHECK(rb1.epochs.size() == 3);

  RunConfig cfg_c = cfg_a;
  cfg_c.out_dir = dir.str() + "/resumed";
  Model<float> mb2;
  const TrainResult rb2 = train_run(cfg_c, mb2, cfg_b.out_dir + "/checkpoint");
  CHECK(rb2.epochs.size() == 3);
  CHECK(rb2.epochs.front().epoch == 4);
  CHECK(rb2.steps == ra.steps);

  // identical parameters, identical final metrics
  REQUIRE(ma.params.size() == mb2.params.size());
  for (size_t i = 0; i < ma.params.size(); ++i)
    for (size_t k = 0; k < ma.params[i]->w.size(); ++k)
      CHECK(ma.params[i]->w.data()[k] == mb2.params[i]->w.data()[k]);
  REQUIRE(ra.eval_valid);
  REQUIRE(rb2.eval_valid);
  CHECK(std::abs(ra.final_eval.frame_map_c - rb2.final_eval.frame_map_c) < 1e-5);
  CHECK(std::abs(ra.final_eval.frame_map_s - rb2.final_eval.frame_map_s) < 1e-5);
  CHECK(std::abs(ra.final_eval.seq_map_c - rb2.final_eval.seq_map_c) < 1e-5);
  CHECK(std::abs(ra.final_eval.seq_map_s - rb2.final_eval.seq_map_s) < 1e-5);

  // per-epoch losses along the resumed tail match the straight run
  for (int e = 3; e < 6; ++e)
    CHECK(ra.epochs[e].total == doctest::Approx(rb2.epochs[e - 3].total).epsilon(1e-12));

  // the resumed log starts at epoch 4
  std::ifstream log(dir.str() + "/resumed/train_log.jsonl");
  std::string line;
  REQUIRE(std::getline(log, line));
  CHECK(json::parse(line).at("epoch") == 4);
}
