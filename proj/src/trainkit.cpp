#include "mtsf/trainkit.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <json.hpp>

#include "mtsf/storage.hpp"

namespace mtsf {

namespace fs = std::filesystem;
using nlohmann::json;

double cosine_lr(int64_t step, int64_t total_steps, double lr_max, double lr_min) {
  if (total_steps <= 0) return lr_max;
  const double s = std::clamp(static_cast<double>(step), 0.0, static_cast<double>(total_steps));
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * s / total_steps));
}

std::vector<Episode> load_split_episodes(const std::string& data_dir,
                                         const std::string& split_file,
                                         const std::string& split_name) {
  const auto splits = read_splits(split_file);
  const auto it = splits.find(split_name);
  if (it == splits.end())
    throw std::invalid_argument("split '" + split_name + "' not found in " + split_file);
  std::vector<Episode> out;
  out.reserve(it->second.size());
  for (const auto& id : it->second) out.push_back(storage::read_episode(data_dir + "/" + id));
  return out;
}

EvalReport evaluate(Model<float>& model, const std::vector<Episode>& episodes,
                    MapSampleMode map_s_mode) {
  const int t = model.cfg.t, c = model.cfg.n_classes;
  const int s = static_cast<int>(episodes.size());
  if (s == 0) throw std::invalid_argument("evaluate: no episodes");
  Mat<double> frame_scores(s * t, c);
  Mat<uint8_t> frame_labels(s * t, c);
  Mat<double> seq_scores(s, c);
  Mat<uint8_t> seq_labels(s, c);
  for (int i = 0; i < s; ++i) {
    const Episode& ep = episodes[i];
    const SampledEpisode se = sample_episode(ep, t, /*jitter=*/false);
    const auto in = model.make_input(ep, se.frame_idx);
    typename Model<float>::ItemCache cache;
    const auto out = model.forward(in, cache);
    for (int ft = 0; ft < t; ++ft)
      for (int j = 0; j < c; ++j) {
        frame_scores(i * t + ft, j) = out.frame_logits(ft, j);
        frame_labels(i * t + ft, j) = se.frame_labels(ft, j);
      }
    for (int j = 0; j < c; ++j) {
      seq_scores(i, j) = out.seq_logits(0, j);
      seq_labels(i, j) = se.seq_label[j];
    }
  }
  EvalReport r;
  r.frame_map_c = map_classwise(frame_scores, frame_labels);
  r.frame_map_s = map_samplewise(frame_scores, frame_labels, map_s_mode);
  r.seq_map_c = map_classwise(seq_scores, seq_labels);
  r.seq_map_s = map_samplewise(seq_scores, seq_labels, map_s_mode);
  r.n_episodes = s;
  return r;
}

void save_checkpoint(const std::string& dir, const RunConfig& cfg, const Model<float>& model,
                     const AdamState<float>& opt, int epochs_completed) {
  fs::create_directories(dir + "/params");
  fs::create_directories(dir + "/moments");
  {
    std::ofstream out(dir + "/config.json");
    if (!out) throw storage_error("cannot write " + dir + "/config.json");
    out << run_config_to_json(cfg) << '\n';
  }
  json names = json::array();
  for (const auto* p : model.params) names.push_back(p->name);
  {
    json j = {{"step", opt.step}, {"epochs_completed", epochs_completed}, {"params", names}};
    std::ofstream out(dir + "/optim.json");
    if (!out) throw storage_error("cannot write " + dir + "/optim.json");
    out << j.dump(2) << '\n';
  }
  for (size_t i = 0; i < model.params.size(); ++i) {
    const auto* p = model.params[i];
    const std::vector<uint32_t> dims = {static_cast<uint32_t>(p->w.rows()),
                                        static_cast<uint32_t>(p->w.cols())};
    storage::write_tensor(dir + "/params/" + p->name + ".mtsf", dims, p->w.vec());
    storage::write_tensor(dir + "/moments/" + p->name + ".m1.mtsf", dims, opt.m[i].vec());
    storage::write_tensor(dir + "/moments/" + p->name + ".m2.mtsf", dims, opt.v[i].vec());
  }
}

namespace {

void read_param_file(const std::string& path, Mat<float>& dst) {
  const storage::Tensor t = storage::read_tensor(path);
  if (t.dtype != storage::Dtype::f32) throw format_error("expected float32 tensor: " + path);
  if (t.dims.size() != 2 || static_cast<int>(t.dims[0]) != dst.rows() ||
      static_cast<int>(t.dims[1]) != dst.cols())
    throw format_error("parameter shape mismatch: " + path);
  std::copy(t.f32.begin(), t.f32.end(), dst.data());
}

}  // namespace

CheckpointInfo load_checkpoint(const std::string& dir, Model<float>& model, AdamState<float>& opt) {
  CheckpointInfo info;
  info.cfg = load_run_config(dir + "/config.json");
  model.init(info.cfg.model, info.cfg.seed);
  std::ifstream in(dir + "/optim.json");
  if (!in) throw storage_error("cannot open " + dir + "/optim.json");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw format_error(std::string("invalid optim.json: ") + e.what());
  }
  info.epochs_completed = j.at("epochs_completed").get<int>();
  const auto names = j.at("params").get<std::vector<std::string>>();
  if (names.size() != model.params.size())
    throw format_error("checkpoint parameter list does not match the model");
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] != model.params[i]->name)
      throw format_error("checkpoint parameter order mismatch at '" + names[i] + "'");
  opt.init(model.params);
  opt.step = j.at("step").get<int64_t>();
  for (size_t i = 0; i < model.params.size(); ++i) {
    auto* p = model.params[i];
    read_param_file(dir + "/params/" + p->name + ".mtsf", p->w);
    read_param_file(dir + "/moments/" + p->name + ".m1.mtsf", opt.m[i]);
    read_param_file(dir + "/moments/" + p->name + ".m2.mtsf", opt.v[i]);
  }
  return info;
}

TrainResult train_run(const RunConfig& cfg, Model<float>& model, const std::string& resume_dir,
                      int stop_after) {
  const auto train_eps = load_split_episodes(cfg.data_dir, cfg.split_file, cfg.train_split);
  if (train_eps.empty()) throw std::invalid_argument("train split is empty");
  std::vector<Episode> eval_eps;
  const bool want_eval = cfg.eval_every > 0;
  if (want_eval) eval_eps = load_split_episodes(cfg.data_dir, cfg.split_file, cfg.eval_split);

  AdamState<float> opt;
  int start_epoch = 0;
  if (!resume_dir.empty()) {
    const CheckpointInfo info = load_checkpoint(resume_dir, model, opt);
    start_epoch = info.epochs_completed;
  } else {
    model.init(cfg.model, cfg.seed);
    opt.init(model.params);
  }

  const int n_train = static_cast<int>(train_eps.size());
  const int bs = std::min(cfg.batch_size, n_train);
  const int64_t steps_per_epoch = (n_train + bs - 1) / bs;
  const int64_t total_steps = steps_per_epoch * cfg.epochs;
  const int t = cfg.model.t, c = cfg.model.n_classes, n_views = cfg.model.n_views;
  const bool use_human = cfg.model.has_visual() && cfg.loss.beta1 != 0.0;

  std::ofstream log;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    std::ofstream(cfg.out_dir + "/config.json") << run_config_to_json(cfg) << '\n';
    log.open(cfg.out_dir + "/train_log.jsonl",
             start_epoch > 0 ? std::ios::app : std::ios::trunc);
    if (!log) throw storage_error("cannot open training log in " + cfg.out_dir);
  }

  const int end_epoch = stop_after > 0 ? std::min(stop_after, cfg.epochs) : cfg.epochs;
  TrainResult result;
  const int progress_stride = std::max(1, (end_epoch - start_epoch) / 10);

  for (int epoch = start_epoch; epoch < end_epoch; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0x100000ull + static_cast<uint64_t>(epoch)));
    Rng jitter_rng(mix_seed(cfg.seed, 0x200000ull + static_cast<uint64_t>(epoch)));
    std::vector<int> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    for (int i = n_train - 1; i > 0; --i) std::swap(order[i], order[shuffle_rng.next_int(i + 1)]);

    EpochStats stats;
    stats.epoch = epoch + 1;
    int n_batches = 0;
    double last_lr = 0.0;

    for (int b0 = 0; b0 < n_train; b0 += bs) {
      const int bn = std::min(bs, n_train - b0);
      model.zero_grads();
      std::vector<typename Model<float>::ItemCache> caches(bn);
      std::vector<typename Model<float>::Output> outs(bn);
      std::vector<SampledEpisode> samples(bn);
      for (int i = 0; i < bn; ++i) {
        const Episode& ep = train_eps[order[b0 + i]];
        samples[i] = sample_episode(ep, t, cfg.jitter, &jitter_rng);
        const auto in = model.make_input(ep, samples[i].frame_idx);
        outs[i] = model.forward(in, caches[i]);
      }

      // Losses are taken over the whole batch at once: frame rows from every
      // episode form one score matrix, episode rows another, so the set-based
      // terms normalize over the batch exactly as they do for a single matrix.
      Mat<float> frame_all(bn * t, c);
      Mat<uint8_t> flab_all(bn * t, c);
      Mat<float> seq_all(bn, c);
      Mat<uint8_t> slab_all(bn, c);
      Mat<float> hum_all;
      Mat<uint8_t> hmask_all;
      if (use_human) {
        hum_all = Mat<float>(bn * n_views, t);
        hmask_all = Mat<uint8_t>(bn * n_views, t);
      }
      for (int i = 0; i < bn; ++i) {
        for (int ft = 0; ft < t; ++ft)
          for (int j = 0; j < c; ++j) {
            frame_all(i * t + ft, j) = outs[i].frame_logits(ft, j);
            flab_all(i * t + ft, j) = samples[i].frame_labels(ft, j);
          }
        for (int j = 0; j < c; ++j) {
          seq_all(i, j) = outs[i].seq_logits(0, j);
          slab_all(i, j) = samples[i].seq_label[j];
        }
        if (use_human)
          for (int v = 0; v < n_views; ++v)
            for (int ft = 0; ft < t; ++ft) {
              hum_all(i * n_views + v, ft) = outs[i].human_probs(v, ft);
              hmask_all(i * n_views + v, ft) = samples[i].human(v, ft);
            }
      }

      float lfs = 0, lfc = 0, lss = 0, lsc = 0, lh = 0;
      Mat<float> gf, gq, gh;
      combined_score_loss<float>(frame_all, flab_all, static_cast<float>(cfg.loss.gamma_s),
                                 static_cast<float>(cfg.loss.gamma_c),
                                 static_cast<float>(cfg.loss.alpha1), cfg.loss.mode, &lfs, &lfc,
                                 &gf);
      combined_score_loss<float>(seq_all, slab_all, static_cast<float>(cfg.loss.gamma_s),
                                 static_cast<float>(cfg.loss.gamma_c),
                                 static_cast<float>(cfg.loss.alpha2), cfg.loss.mode, &lss, &lsc,
                                 &gq);
      if (use_human) lh = bce_prob_loss(hum_all, hmask_all, &gh);
      const double total = cfg.loss.beta1 * lh + cfg.loss.beta2 * (lfs + cfg.loss.alpha1 * lfc) +
                           cfg.loss.beta3 * (lss + cfg.loss.alpha2 * lsc);

      Mat<float> dhuman_empty;
      for (int i = 0; i < bn; ++i) {
        Mat<float> dframe(t, c), dseq(1, c);
        for (int ft = 0; ft < t; ++ft)
          for (int j = 0; j < c; ++j)
            dframe(ft, j) = static_cast<float>(cfg.loss.beta2) * gf(i * t + ft, j);
        for (int j = 0; j < c; ++j) dseq(0, j) = static_cast<float>(cfg.loss.beta3) * gq(i, j);
        if (use_human) {
          Mat<float> dhuman(n_views, t);
          for (int v = 0; v < n_views; ++v)
            for (int ft = 0; ft < t; ++ft)
              dhuman(v, ft) = static_cast<float>(cfg.loss.beta1) * gh(i * n_views + v, ft);
          model.backward(caches[i], dframe, dseq, dhuman);
        } else {
          model.backward(caches[i], dframe, dseq, dhuman_empty);
        }
      }

      last_lr = cosine_lr(opt.step, total_steps, cfg.lr, cfg.lr_min);
      opt.update(model.params, last_lr, cfg.weight_decay, cfg.adam_beta1, cfg.adam_beta2,
                 cfg.adam_eps);

      stats.total += total;
      stats.human += lh;
      stats.frame_sample += lfs;
      stats.frame_class += lfc;
      stats.seq_sample += lss;
      stats.seq_class += lsc;
      ++n_batches;
    }

    stats.total /= n_batches;
    stats.human /= n_batches;
    stats.frame_sample /= n_batches;
    stats.frame_class /= n_batches;
    stats.seq_sample /= n_batches;
    stats.seq_class /= n_batches;
    stats.step = opt.step;
    stats.lr = last_lr;
    result.epochs.push_back(stats);

    const bool last_epoch = epoch + 1 == end_epoch;
    json line = {{"epoch", stats.epoch},
                 {"step", stats.step},
                 {"lr", stats.lr},
                 {"loss_total", stats.total},
                 {"loss_human", stats.human},
                 {"loss_frame_sample", stats.frame_sample},
                 {"loss_frame_class", stats.frame_class},
                 {"loss_seq_sample", stats.seq_sample},
                 {"loss_seq_class", stats.seq_class}};
    if (want_eval && !eval_eps.empty() &&
        ((epoch + 1) % cfg.eval_every == 0 || last_epoch)) {
      const EvalReport r = evaluate(model, eval_eps, cfg.map_s_mode);
      line["eval_frame_map_c"] = r.frame_map_c;
      line["eval_frame_map_s"] = r.frame_map_s;
      line["eval_seq_map_c"] = r.seq_map_c;
      line["eval_seq_map_s"] = r.seq_map_s;
      result.final_eval = r;
      result.eval_valid = true;
    }
    if (log.is_open()) log << line.dump() << '\n' << std::flush;
    if ((epoch - start_epoch) % progress_stride == 0 || last_epoch)
      std::cerr << "epoch " << stats.epoch << "/" << cfg.epochs << " loss " << stats.total
                << '\n';

    if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 &&
        (epoch + 1) % cfg.checkpoint_every == 0 && !last_epoch)
      save_checkpoint(cfg.out_dir + "/checkpoint", cfg, model, opt, epoch + 1);
  }

  if (!cfg.out_dir.empty())
    save_checkpoint(cfg.out_dir + "/checkpoint", cfg, model, opt, end_epoch);
  result.steps = opt.step;
  return result;
}

}  // namespace mtsf
