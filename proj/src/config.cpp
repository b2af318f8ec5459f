#include <fstream>
#include <set>

#include <json.hpp>

#include "mtsf/trainkit.hpp"

namespace mtsf {

using nlohmann::json;

std::string run_config_to_json(const RunConfig& cfg) {
  const ModelConfig& m = cfg.model;
  json j;
  j["model"] = {{"n_views", m.n_views},
                {"n_classes", m.n_classes},
                {"t", m.t},
                {"d", m.d},
                {"h", m.h},
                {"w", m.w},
                {"f", m.f},
                {"patch", m.patch},
                {"d_a", m.d_a},
                {"d_v", m.d_v},
                {"d_t", m.d_t},
                {"audio_layers", m.audio_layers},
                {"visual_layers", m.visual_layers},
                {"temporal_layers", m.temporal_layers},
                {"ffn_mult", m.ffn_mult},
                {"audio_heads", m.audio_heads},
                {"visual_heads", m.visual_heads},
                {"temporal_heads", m.temporal_heads},
                {"fusion_heads", m.fusion_heads},
                {"visual_pos", m.visual_pos},
                {"modality", to_string(m.modality)},
                {"fusion", to_string(m.fusion)}};
  j["loss"] = {{"mode", to_string(cfg.loss.mode)},
               {"beta1", cfg.loss.beta1},
               {"beta2", cfg.loss.beta2},
               {"beta3", cfg.loss.beta3},
               {"alpha1", cfg.loss.alpha1},
               {"alpha2", cfg.loss.alpha2},
               {"gamma_s", cfg.loss.gamma_s},
               {"gamma_c", cfg.loss.gamma_c}};
  j["optim"] = {{"lr", cfg.lr},
                {"lr_min", cfg.lr_min},
                {"weight_decay", cfg.weight_decay},
                {"adam_beta1", cfg.adam_beta1},
                {"adam_beta2", cfg.adam_beta2},
                {"adam_eps", cfg.adam_eps},
                {"batch_size", cfg.batch_size},
                {"epochs", cfg.epochs}};
  j["run"] = {{"seed", cfg.seed},
              {"jitter", cfg.jitter},
              {"eval_every", cfg.eval_every},
              {"checkpoint_every", cfg.checkpoint_every},
              {"map_s_mode", to_string(cfg.map_s_mode)},
              {"data_dir", cfg.data_dir},
              {"split_file", cfg.split_file},
              {"out_dir", cfg.out_dir},
              {"train_split", cfg.train_split},
              {"eval_split", cfg.eval_split}};
  return j.dump(2);
}

namespace {

// Pulls section `name` out of j, erroring on keys that are not in `known`.
json take_section(const json& j, const std::string& name, const std::set<std::string>& known) {
  if (!j.contains(name)) return json::object();
  const json& sec = j.at(name);
  if (!sec.is_object()) throw format_error("config section '" + name + "' must be an object");
  for (const auto& item : sec.items())
    if (!known.count(item.key()))
      throw format_error("unknown config key '" + name + "." + item.key() + "'");
  return sec;
}

template <typename T>
void get_to(const json& sec, const char* key, T& out) {
  if (sec.contains(key)) sec.at(key).get_to(out);
}

}  // namespace

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw format_error(std::string("invalid config JSON: ") + e.what());
  }
  if (!j.is_object()) throw format_error("config must be a JSON object");
  for (const auto& item : j.items())
    if (item.key() != "model" && item.key() != "loss" && item.key() != "optim" &&
        item.key() != "run")
      throw format_error("unknown config section '" + item.key() + "'");

  RunConfig cfg;
  ModelConfig& m = cfg.model;
  {
    const json sec = take_section(
        j, "model",
        {"n_views", "n_classes", "t", "d", "h", "w", "f", "patch", "d_a", "d_v", "d_t",
         "audio_layers", "visual_layers", "temporal_layers", "ffn_mult", "audio_heads",
         "visual_heads", "temporal_heads", "fusion_heads", "visual_pos", "modality", "fusion"});
    get_to(sec, "n_views", m.n_views);
    get_to(sec, "n_classes", m.n_classes);
    get_to(sec, "t", m.t);
    get_to(sec, "d", m.d);
    get_to(sec, "h", m.h);
    get_to(sec, "w", m.w);
    get_to(sec, "f", m.f);
    get_to(sec, "patch", m.patch);
    get_to(sec, "d_a", m.d_a);
    get_to(sec, "d_v", m.d_v);
    get_to(sec, "d_t", m.d_t);
    get_to(sec, "audio_layers", m.audio_layers);
    get_to(sec, "visual_layers", m.visual_layers);
    get_to(sec, "temporal_layers", m.temporal_layers);
    get_to(sec, "ffn_mult", m.ffn_mult);
    get_to(sec, "audio_heads", m.audio_heads);
    get_to(sec, "visual_heads", m.visual_heads);
    get_to(sec, "temporal_heads", m.temporal_heads);
    get_to(sec, "fusion_heads", m.fusion_heads);
    get_to(sec, "visual_pos", m.visual_pos);
    if (sec.contains("modality")) m.modality = modality_from_string(sec.at("modality"));
    if (sec.contains("fusion")) m.fusion = fusion_strategy_from_string(sec.at("fusion"));
  }
  {
    const json sec = take_section(
        j, "loss", {"mode", "beta1", "beta2", "beta3", "alpha1", "alpha2", "gamma_s", "gamma_c"});
    if (sec.contains("mode")) cfg.loss.mode = loss_mode_from_string(sec.at("mode"));
    get_to(sec, "beta1", cfg.loss.beta1);
    get_to(sec, "beta2", cfg.loss.beta2);
    get_to(sec, "beta3", cfg.loss.beta3);
    get_to(sec, "alpha1", cfg.loss.alpha1);
    get_to(sec, "alpha2", cfg.loss.alpha2);
    get_to(sec, "gamma_s", cfg.loss.gamma_s);
    get_to(sec, "gamma_c", cfg.loss.gamma_c);
  }
  {
    const json sec = take_section(j, "optim",
                                  {"lr", "lr_min", "weight_decay", "adam_beta1", "adam_beta2",
                                   "adam_eps", "batch_size", "epochs"});
    get_to(sec, "lr", cfg.lr);
    get_to(sec, "lr_min", cfg.lr_min);
    get_to(sec, "weight_decay", cfg.weight_decay);
    get_to(sec, "adam_beta1", cfg.adam_beta1);
    get_to(sec, "adam_beta2", cfg.adam_beta2);
    get_to(sec, "adam_eps", cfg.adam_eps);
    get_to(sec, "batch_size", cfg.batch_size);
    get_to(sec, "epochs", cfg.epochs);
  }
  {
    const json sec = take_section(
        j, "run", {"seed", "jitter", "eval_every", "checkpoint_every", "map_s_mode", "data_dir",
                   "split_file", "out_dir", "train_split", "eval_split"});
    get_to(sec, "seed", cfg.seed);
    get_to(sec, "jitter", cfg.jitter);
    get_to(sec, "eval_every", cfg.eval_every);
    get_to(sec, "checkpoint_every", cfg.checkpoint_every);
    if (sec.contains("map_s_mode"))
      cfg.map_s_mode = map_sample_mode_from_string(sec.at("map_s_mode"));
    get_to(sec, "data_dir", cfg.data_dir);
    get_to(sec, "split_file", cfg.split_file);
    get_to(sec, "out_dir", cfg.out_dir);
    get_to(sec, "train_split", cfg.train_split);
    get_to(sec, "eval_split", cfg.eval_split);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw storage_error("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return run_config_from_json(text);
}

}  // namespace mtsf
