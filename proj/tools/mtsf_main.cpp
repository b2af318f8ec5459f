// Command-line front end: dataset synthesis, stratified splitting, training,
// evaluation, the fusion ablation sweep and attention export. Machine-readable
// results go to stdout as JSON; progress and errors go to stderr.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mtsf/common.hpp"
#include "mtsf/datapipe.hpp"
#include "mtsf/storage.hpp"
#include "mtsf/synthgen.hpp"
#include "mtsf/trainkit.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mtsf;

namespace {

// Bad invocations (unknown values, unreadable configs, malformed flag syntax)
// exit with 2; runtime failures exit with 1.
struct usage_error : std::runtime_error {
  explicit usage_error(const std::string& msg) : std::runtime_error(msg) {}
};

RunConfig load_config_or_usage(const std::string& path) {
  try {
    return load_run_config(path);
  } catch (const storage_error& e) {
    throw usage_error(e.what());
  } catch (const format_error& e) {
    throw usage_error(std::string("config ") + path + ": " + e.what());
  }
}

std::vector<uint64_t> parse_seed_list(const std::string& text) {
  std::vector<uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      size_t pos = 0;
      seeds.push_back(std::stoull(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw usage_error("bad seed list entry '" + item + "'");
    }
  }
  if (seeds.empty()) throw usage_error("seed list is empty");
  return seeds;
}

// "train=0.7,test=0.3" -> ordered name/fraction pairs
std::vector<std::pair<std::string, double>> parse_ratios(const std::string& text) {
  std::vector<std::pair<std::string, double>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw usage_error("ratio entry '" + item + "' needs name=frac");
    const std::string name = item.substr(0, eq);
    double frac = 0.0;
    try {
      size_t pos = 0;
      frac = std::stod(item.substr(eq + 1), &pos);
      if (pos != item.size() - eq - 1) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw usage_error("bad ratio value in '" + item + "'");
    }
    out.emplace_back(name, frac);
  }
  if (out.size() < 2) throw usage_error("need at least two splits in --ratios");
  return out;
}

struct GenFlags {
  std::string out_dir, config_path, signature_mode;
  int episodes = 0;
  uint64_t seed = 0;
  std::optional<int> views, t_raw, classes, events, d, h, w, f, class_jitter;
  std::optional<double> visual_amp, audio_amp, noise, imbalance;
};

int cmd_gen_data(const GenFlags& g) {
  synthgen::GenConfig cfg;
  if (!g.config_path.empty()) {
    std::ifstream in(g.config_path);
    if (!in) throw usage_error("cannot open config: " + g.config_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
      cfg = synthgen::GenConfig::from_json(text);
    } catch (const std::exception& e) {
      throw usage_error("config " + g.config_path + ": " + e.what());
    }
  }
  if (g.views) cfg.n_views = *g.views;
  if (g.t_raw) cfg.t_raw = *g.t_raw;
  if (g.classes) cfg.n_classes = *g.classes;
  if (g.events) cfg.n_events = *g.events;
  if (g.d) cfg.d = *g.d;
  if (g.h) cfg.h = *g.h;
  if (g.w) cfg.w = *g.w;
  if (g.f) cfg.f = *g.f;
  if (g.class_jitter) cfg.class_jitter = *g.class_jitter;
  if (g.visual_amp) cfg.visual_amplitude = *g.visual_amp;
  if (g.audio_amp) cfg.audio_amplitude = *g.audio_amp;
  if (g.noise) cfg.noise_sigma = *g.noise;
  if (g.imbalance) cfg.imbalance_factor = *g.imbalance;
  if (!g.signature_mode.empty()) {
    try {
      cfg.signature_mode = synthgen::signature_mode_from_string(g.signature_mode);
    } catch (const std::invalid_argument& e) {
      throw usage_error(e.what());
    }
  }
  const auto manifest = synthgen::generate_dataset(g.episodes, cfg, g.seed, g.out_dir);
  json out = {{"out_dir", g.out_dir},
              {"episodes", manifest.episode_ids.size()},
              {"seed", g.seed},
              {"gen_config", json::parse(manifest.gen_config_json)}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_split(const std::string& data_dir, const std::string& out_file, const std::string& ratios,
              uint64_t seed) {
  const auto pairs = parse_ratios(ratios);
  double sum = 0.0;
  for (const auto& [name, frac] : pairs) sum += frac;
  if (std::abs(sum - 1.0) > 1e-6) throw usage_error("--ratios fractions must sum to 1");

  const auto manifest = storage::read_manifest(data_dir);
  const int s = static_cast<int>(manifest.episode_ids.size());
  if (s == 0) throw std::runtime_error("dataset has no episodes: " + data_dir);
  // stratify on the episode-level labels
  std::vector<std::vector<uint8_t>> seq_labels(s);
  int n_classes = 0;
  for (int i = 0; i < s; ++i) {
    const Episode ep = storage::read_episode(fs::path(data_dir) / manifest.episode_ids[i]);
    seq_labels[i] = ep.seq_label;
    n_classes = ep.n_classes;
  }
  Mat<uint8_t> labels(s, n_classes);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < n_classes; ++j) labels(i, j) = seq_labels[i][j];
  std::vector<double> fracs;
  for (const auto& [name, frac] : pairs) fracs.push_back(frac);
  const std::vector<int> assign = stratified_split(labels, fracs, seed);

  std::map<std::string, std::vector<std::string>> splits;
  for (const auto& [name, frac] : pairs) splits[name] = {};
  for (int i = 0; i < s; ++i) splits[pairs[assign[i]].first].push_back(manifest.episode_ids[i]);
  write_splits(out_file, splits);

  json counts = json::object();
  for (const auto& [name, ids] : splits) counts[name] = ids.size();
  json out = {{"out", out_file}, {"seed", seed}, {"counts", counts}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

struct TrainFlags {
  std::string config_path, data_dir, split_file, out_dir, resume_dir;
  std::string fusion, modality, loss_mode, map_s_mode, train_split, eval_split;
  std::optional<uint64_t> seed;
  std::optional<int> epochs, batch_size, eval_every, checkpoint_every, t;
  std::optional<double> lr, lr_min, weight_decay;
  std::optional<double> beta1, beta2, beta3, alpha1, alpha2, gamma_s, gamma_c;
  std::optional<bool> jitter;
};

RunConfig resolve_train_config(const TrainFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) cfg = load_config_or_usage(f.config_path);
  try {
    if (!f.fusion.empty()) cfg.model.fusion = fusion_strategy_from_string(f.fusion);
    if (!f.modality.empty()) cfg.model.modality = modality_from_string(f.modality);
    if (!f.loss_mode.empty()) cfg.loss.mode = loss_mode_from_string(f.loss_mode);
    if (!f.map_s_mode.empty()) cfg.map_s_mode = map_sample_mode_from_string(f.map_s_mode);
  } catch (const std::invalid_argument& e) {
    throw usage_error(e.what());
  }
  if (!f.data_dir.empty()) cfg.data_dir = f.data_dir;
  if (!f.split_file.empty()) cfg.split_file = f.split_file;
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  if (!f.train_split.empty()) cfg.train_split = f.train_split;
  if (!f.eval_split.empty()) cfg.eval_split = f.eval_split;
  if (f.seed) cfg.seed = *f.seed;
  if (f.epochs) cfg.epochs = *f.epochs;
  if (f.batch_size) cfg.batch_size = *f.batch_size;
  if (f.eval_every) cfg.eval_every = *f.eval_every;
  if (f.checkpoint_every) cfg.checkpoint_every = *f.checkpoint_every;
  if (f.t) cfg.model.t = *f.t;
  if (f.lr) cfg.lr = *f.lr;
  if (f.lr_min) cfg.lr_min = *f.lr_min;
  if (f.weight_decay) cfg.weight_decay = *f.weight_decay;
  if (f.beta1) cfg.loss.beta1 = *f.beta1;
  if (f.beta2) cfg.loss.beta2 = *f.beta2;
  if (f.beta3) cfg.loss.beta3 = *f.beta3;
  if (f.alpha1) cfg.loss.alpha1 = *f.alpha1;
  if (f.alpha2) cfg.loss.alpha2 = *f.alpha2;
  if (f.gamma_s) cfg.loss.gamma_s = *f.gamma_s;
  if (f.gamma_c) cfg.loss.gamma_c = *f.gamma_c;
  if (f.jitter) cfg.jitter = *f.jitter;
  if (cfg.data_dir.empty()) throw usage_error("train needs --data (or data_dir in the config)");
  if (cfg.split_file.empty()) throw usage_error("train needs --split (or split_file in the config)");
  if (cfg.out_dir.empty()) throw usage_error("train needs --out (or out_dir in the config)");
  return cfg;
}

json eval_report_json(const EvalReport& r) {
  return {{"frame_map_c", r.frame_map_c},
          {"frame_map_s", r.frame_map_s},
          {"seq_map_c", r.seq_map_c},
          {"seq_map_s", r.seq_map_s},
          {"episodes", r.n_episodes}};
}

int cmd_train(const TrainFlags& f) {
  RunConfig cfg;
  if (!f.resume_dir.empty()) {
    cfg = load_config_or_usage(f.resume_dir + "/config.json");
    // resumed runs keep the stored config; only paths may be redirected
    if (!f.data_dir.empty()) cfg.data_dir = f.data_dir;
    if (!f.split_file.empty()) cfg.split_file = f.split_file;
    if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  } else {
    cfg = resolve_train_config(f);
  }
  Model<float> model;
  const TrainResult result = train_run(cfg, model, f.resume_dir);
  json out = {{"epochs", cfg.epochs},
              {"steps", result.steps},
              {"out_dir", cfg.out_dir},
              {"checkpoint", cfg.out_dir + "/checkpoint"}};
  if (!result.epochs.empty()) {
    out["first_epoch_loss"] = result.epochs.front().total;
    out["final_epoch_loss"] = result.epochs.back().total;
  }
  if (result.eval_valid) out["eval"] = eval_report_json(result.final_eval);
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_eval(const std::string& ckpt_dir, const std::string& data_dir,
             const std::string& split_file, const std::string& split_name,
             const std::string& map_s_mode) {
  Model<float> model;
  AdamState<float> opt;
  const CheckpointInfo info = load_checkpoint(ckpt_dir, model, opt);
  MapSampleMode mode = info.cfg.map_s_mode;
  if (!map_s_mode.empty()) {
    try {
      mode = map_sample_mode_from_string(map_s_mode);
    } catch (const std::invalid_argument& e) {
      throw usage_error(e.what());
    }
  }
  const std::string data = data_dir.empty() ? info.cfg.data_dir : data_dir;
  const std::string split = split_file.empty() ? info.cfg.split_file : split_file;
  const auto episodes = load_split_episodes(data, split, split_name);
  const EvalReport r = evaluate(model, episodes, mode);
  json out = {{"checkpoint", ckpt_dir}, {"split", split_name}, {"metrics", eval_report_json(r)}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_ablate_fusion(const TrainFlags& f, const std::string& seed_list) {
  const RunConfig base = resolve_train_config(f);
  const std::vector<uint64_t> seeds = parse_seed_list(seed_list);
  const std::vector<FusionStrategy> strategies = {FusionStrategy::kTransformer,
                                                  FusionStrategy::kMax, FusionStrategy::kMean,
                                                  FusionStrategy::kConcat};
  const auto test_eps = load_split_episodes(base.data_dir, base.split_file, base.eval_split);

  json runs = json::array();
  std::map<std::string, std::vector<double>> frame_by_strategy, seq_by_strategy;
  for (const FusionStrategy strategy : strategies) {
    for (const uint64_t seed : seeds) {
      RunConfig cfg = base;
      cfg.model.fusion = strategy;
      cfg.seed = seed;
      cfg.eval_every = 0;
      cfg.out_dir = base.out_dir + "/" + to_string(strategy) + "-seed" + std::to_string(seed);
      std::cerr << "[ablate] " << to_string(strategy) << " seed " << seed << '\n';
      Model<float> model;
      train_run(cfg, model);
      const EvalReport r = evaluate(model, test_eps, cfg.map_s_mode);
      runs.push_back({{"fusion", to_string(strategy)},
                      {"seed", seed},
                      {"metrics", eval_report_json(r)}});
      frame_by_strategy[to_string(strategy)].push_back(r.frame_map_c);
      seq_by_strategy[to_string(strategy)].push_back(r.seq_map_c);
    }
  }
  json means = json::object();
  std::vector<std::pair<double, std::string>> ranking;
  for (const auto& [name, vals] : frame_by_strategy) {
    double fsum = 0.0;
    for (double v : vals) fsum += v;
    double ssum = 0.0;
    for (double v : seq_by_strategy[name]) ssum += v;
    const double fmean = fsum / vals.size();
    means[name] = {{"frame_map_c", fmean}, {"seq_map_c", ssum / vals.size()}};
    ranking.emplace_back(fmean, name);
  }
  std::sort(ranking.begin(), ranking.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  json order = json::array();
  for (const auto& [score, name] : ranking) order.push_back(name);
  json out = {{"runs", runs}, {"mean", means}, {"ranking", order}};
  fs::create_directories(base.out_dir);
  std::ofstream(base.out_dir + "/ablation.json") << out.dump(2) << '\n';
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_export_attention(const std::string& ckpt_dir, const std::string& data_dir,
                         const std::string& episode_id, const std::string& out_dir) {
  Model<float> model;
  AdamState<float> opt;
  const CheckpointInfo info = load_checkpoint(ckpt_dir, model, opt);
  const std::string data = data_dir.empty() ? info.cfg.data_dir : data_dir;
  const Episode ep = storage::read_episode(fs::path(data) / episode_id);
  const SampledEpisode se = sample_episode(ep, model.cfg.t);
  const auto in = model.make_input(ep, se.frame_idx);
  Model<float>::ItemCache cache;
  model.forward(in, cache);

  fs::create_directories(out_dir);
  json files = json::array();
  const int t = model.cfg.t;
  for (int v = 0; v < model.cfg.n_views; ++v) {
    const Mat<float> a = model.temporal_attention(cache, v);
    const std::string name = "temporal_attn_view" + std::to_string(v + 1) + ".mtsf";
    storage::write_tensor(fs::path(out_dir) / name,
                          {static_cast<uint32_t>(t), static_cast<uint32_t>(t)}, a.vec());
    files.push_back(name);
  }
  if (model.cfg.fusion == FusionStrategy::kTransformer) {
    const auto frames = model.fusion_attention(cache);
    const int n = model.cfg.n_views;
    std::vector<float> flat;
    flat.reserve(static_cast<size_t>(t) * n * n);
    for (const auto& m : frames)
      flat.insert(flat.end(), m.vec().begin(), m.vec().end());
    storage::write_tensor(fs::path(out_dir) / "fusion_attn.mtsf",
                          {static_cast<uint32_t>(t), static_cast<uint32_t>(n),
                           static_cast<uint32_t>(n)},
                          flat);
    files.push_back("fusion_attn.mtsf");
  }
  json out = {{"episode", episode_id}, {"out_dir", out_dir}, {"files", files}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    apply_thread_env();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  CLI::App app{"multi-view multi-modal action recognition toolkit"};
  app.require_subcommand(1);

  // gen-data
  GenFlags gen;
  auto* sc_gen = app.add_subcommand("gen-data", "synthesize a dataset of episodes");
  sc_gen->add_option("--out", gen.out_dir, "dataset output directory")->required();
  sc_gen->add_option("--episodes", gen.episodes, "number of episodes")->required();
  sc_gen->add_option("--seed", gen.seed, "dataset seed");
  sc_gen->add_option("--config", gen.config_path, "generator config JSON file");
  sc_gen->add_option("--views", gen.views, "camera/microphone pairs per episode");
  sc_gen->add_option("--t-raw", gen.t_raw, "raw frames per episode");
  sc_gen->add_option("--classes", gen.classes, "number of action classes");
  sc_gen->add_option("--events", gen.events, "events per episode");
  sc_gen->add_option("--channels", gen.d, "visual channels");
  sc_gen->add_option("--height", gen.h, "frame height");
  sc_gen->add_option("--width", gen.w, "frame width");
  sc_gen->add_option("--bins", gen.f, "spectrogram frequency bins");
  sc_gen->add_option("--signature-mode", gen.signature_mode,
                     "class signature placement: both|split|visual|audio");
  sc_gen->add_option("--visual-amplitude", gen.visual_amp, "visual signature strength");
  sc_gen->add_option("--audio-amplitude", gen.audio_amp, "audio signature strength");
  sc_gen->add_option("--noise-sigma", gen.noise, "background noise level");
  sc_gen->add_option("--imbalance", gen.imbalance, "class imbalance factor");
  sc_gen->add_option("--class-jitter", gen.class_jitter, "class draw jitter");

  // split
  std::string sp_data, sp_out, sp_ratios = "train=0.7,test=0.3";
  uint64_t sp_seed = 0;
  auto* sc_split = app.add_subcommand("split", "stratified dataset split");
  sc_split->add_option("--data", sp_data, "dataset directory")->required();
  sc_split->add_option("--out", sp_out, "output splits.json path")->required();
  sc_split->add_option("--ratios", sp_ratios, "name=frac,... (fractions sum to 1)");
  sc_split->add_option("--seed", sp_seed, "tie-break seed");

  // shared train-style flags
  const auto add_train_flags = [](CLI::App* sc, TrainFlags& f) {
    sc->add_option("--config", f.config_path, "run config JSON file");
    sc->add_option("--data", f.data_dir, "dataset directory");
    sc->add_option("--split", f.split_file, "splits.json path");
    sc->add_option("--out", f.out_dir, "run output directory");
    sc->add_option("--seed", f.seed, "training seed");
    sc->add_option("--epochs", f.epochs, "training epochs");
    sc->add_option("--batch-size", f.batch_size, "episodes per step");
    sc->add_option("--lr", f.lr, "peak learning rate");
    sc->add_option("--lr-min", f.lr_min, "final learning rate");
    sc->add_option("--weight-decay", f.weight_decay, "decoupled weight decay");
    sc->add_option("--t", f.t, "sampled frames per episode");
    sc->add_option("--fusion", f.fusion, "transformer|max|mean|concat");
    sc->add_option("--modality", f.modality, "av|visual|audio");
    sc->add_option("--loss-mode", f.loss_mode, "two_way|bce");
    sc->add_option("--beta1", f.beta1, "presence loss weight");
    sc->add_option("--beta2", f.beta2, "frame loss weight");
    sc->add_option("--beta3", f.beta3, "sequence loss weight");
    sc->add_option("--alpha1", f.alpha1, "frame class-wise mix");
    sc->add_option("--alpha2", f.alpha2, "sequence class-wise mix");
    sc->add_option("--gamma-s", f.gamma_s, "sample-wise temperature");
    sc->add_option("--gamma-c", f.gamma_c, "class-wise temperature");
    sc->add_option("--eval-every", f.eval_every, "evaluate every k epochs (0 = never)");
    sc->add_option("--checkpoint-every", f.checkpoint_every, "checkpoint every k epochs");
    sc->add_option("--map-s-mode", f.map_s_mode, "example|flattened");
    sc->add_option("--train-split", f.train_split, "split used for training");
    sc->add_option("--eval-split", f.eval_split, "split used for evaluation");
    sc->add_flag("--jitter,!--no-jitter", f.jitter, "jittered frame sampling");
  };

  TrainFlags tf;
  auto* sc_train = app.add_subcommand("train", "train a model");
  add_train_flags(sc_train, tf);
  sc_train->add_option("--resume", tf.resume_dir, "checkpoint directory to resume from");

  std::string ev_ckpt, ev_data, ev_split, ev_split_name = "test", ev_mode;
  auto* sc_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  sc_eval->add_option("--checkpoint", ev_ckpt, "checkpoint directory")->required();
  sc_eval->add_option("--data", ev_data, "dataset directory (default: from checkpoint)");
  sc_eval->add_option("--split", ev_split, "splits.json (default: from checkpoint)");
  sc_eval->add_option("--split-name", ev_split_name, "split to evaluate");
  sc_eval->add_option("--map-s-mode", ev_mode, "example|flattened");

  TrainFlags af;
  std::string af_seeds = "1,2,3";
  auto* sc_ablate = app.add_subcommand("ablate-fusion", "train/evaluate every fusion strategy");
  add_train_flags(sc_ablate, af);
  sc_ablate->add_option("--seeds", af_seeds, "comma-separated training seeds");

  std::string ex_ckpt, ex_data, ex_episode, ex_out;
  auto* sc_export = app.add_subcommand("export-attention", "dump attention maps for an episode");
  sc_export->add_option("--checkpoint", ex_ckpt, "checkpoint directory")->required();
  sc_export->add_option("--data", ex_data, "dataset directory (default: from checkpoint)");
  sc_export->add_option("--episode", ex_episode, "episode id")->required();
  sc_export->add_option("--out", ex_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sc_gen->parsed()) return cmd_gen_data(gen);
    if (sc_split->parsed()) return cmd_split(sp_data, sp_out, sp_ratios, sp_seed);
    if (sc_train->parsed()) return cmd_train(tf);
    if (sc_eval->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_split, ev_split_name, ev_mode);
    if (sc_ablate->parsed()) return cmd_ablate_fusion(af, af_seeds);
    if (sc_export->parsed()) return cmd_export_attention(ex_ckpt, ex_data, ex_episode, ex_out);
  } catch (const usage_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
