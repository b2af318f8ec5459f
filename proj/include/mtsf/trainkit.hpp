#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtsf/datapipe.hpp"
#include "mtsf/losses.hpp"
#include "mtsf/metrics.hpp"
#include "mtsf/model.hpp"

namespace mtsf {

struct RunConfig {
  ModelConfig model;
  LossWeights loss;
  // optimizer
  double lr = 1e-4, lr_min = 0.0, weight_decay = 5e-4;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  int batch_size = 12, epochs = 300;
  // run
  uint64_t seed = 0;
  bool jitter = true;
  int eval_every = 0;       // 0 = never during training
  int checkpoint_every = 0; // 0 = final checkpoint only
  MapSampleMode map_s_mode = MapSampleMode::kExample;
  std::string data_dir, split_file, out_dir;
  std::string train_split = "train", eval_split = "test";
};

// Canonical JSON round-trip. Parsing is strict: unknown keys are rejected
// with the offending key in the message; missing keys keep their defaults.
std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Half-cosine decay from lr_max at step 0 to lr_min at total_steps.
double cosine_lr(int64_t step, int64_t total_steps, double lr_max, double lr_min);

// Adam with decoupled weight decay; moments stored alongside each parameter.
template <typename T>
struct AdamState {
  std::vector<Mat<T>> m, v;
  int64_t step = 0;

  void init(const nn::ParamRefs<T>& params) {
    m.clear();
    v.clear();
    step = 0;
    for (auto* p : params) {
      m.emplace_back(p->w.rows(), p->w.cols());
      v.emplace_back(p->w.rows(), p->w.cols());
    }
  }

  void update(nn::ParamRefs<T>& params, double lr, double weight_decay, double beta1,
              double beta2, double eps) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (size_t i = 0; i < params.size(); ++i) {
      Mat<T>& w = params[i]->w;
      Mat<T>& g = params[i]->g;
      for (size_t k = 0; k < w.size(); ++k) {
        const double gk = g.data()[k];
        const double mk = beta1 * m[i].data()[k] + (1.0 - beta1) * gk;
        const double vk = beta2 * v[i].data()[k] + (1.0 - beta2) * gk * gk;
        m[i].data()[k] = static_cast<T>(mk);
        v[i].data()[k] = static_cast<T>(vk);
        const double update = (mk / c1) / (std::sqrt(vk / c2) + eps) +
                              weight_decay * static_cast<double>(w.data()[k]);
        w.data()[k] = static_cast<T>(w.data()[k] - lr * update);
      }
    }
  }
};

struct EvalReport {
  double frame_map_c = 0.0, frame_map_s = 0.0;
  double seq_map_c = 0.0, seq_map_s = 0.0;
  int n_episodes = 0;
};

// Deterministic midpoint-sampled evaluation over whole episodes.
EvalReport evaluate(Model<float>& model, const std::vector<Episode>& episodes,
                    MapSampleMode map_s_mode);

struct EpochStats {
  int epoch = 0;
  int64_t step = 0;
  double lr = 0.0;
  double total = 0.0, human = 0.0;
  double frame_sample = 0.0, frame_class = 0.0;
  double seq_sample = 0.0, seq_class = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  EvalReport final_eval;
  bool eval_valid = false;
  int64_t steps = 0;
};

// Runs (or resumes) training per the config: loads the dataset and split,
// shuffles with per-epoch derived streams, optimizes with Adam under the
// cosine schedule, appends one JSONL line per epoch to out_dir/train_log.jsonl
// and leaves a final checkpoint in out_dir/checkpoint. The model argument is
// initialized inside (from the resume checkpoint when given). stop_after > 0
// ends the run after that many total epochs while keeping the full-horizon
// schedule — an interrupted run that a later call can resume seamlessly.
TrainResult train_run(const RunConfig& cfg, Model<float>& model,
                      const std::string& resume_dir = "", int stop_after = 0);

// Checkpoint layout: config.json, optim.json, params/<name>.mtsf and
// moments/<name>.m{1,2}.mtsf.
void save_checkpoint(const std::string& dir, const RunConfig& cfg, const Model<float>& model,
                     const AdamState<float>& opt, int epochs_completed);

struct CheckpointInfo {
  RunConfig cfg;
  int epochs_completed = 0;
};

CheckpointInfo load_checkpoint(const std::string& dir, Model<float>& model, AdamState<float>& opt);

// Loads the episodes named by a split (in split order).
std::vector<Episode> load_split_episodes(const std::string& data_dir,
                                         const std::string& split_file,
                                         const std::string& split_name);

}  // namespace mtsf
