#include "mtsf/storage.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mtsf/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts are unsupported");

namespace mtsf::storage {

namespace {

constexpr char kMagic[4] = {'M', 'T', 'S', 'F'};
constexpr uint8_t kVersion = 1;
constexpr int kMaxNdim = 5;

using nlohmann::json;

void check_dims(const std::vector<uint32_t>& dims, size_t value_count) {
  if (dims.empty() || dims.size() > kMaxNdim)
    throw std::invalid_argument("tensor ndim must be in [1, 5], got " + std::to_string(dims.size()));
  size_t n = 1;
  for (uint32_t d : dims) n *= d;
  if (n != value_count)
    throw std::invalid_argument("tensor value count " + std::to_string(value_count) +
                                " does not match dims product " + std::to_string(n));
}

void write_header(std::ofstream& out, Dtype dtype, const std::vector<uint32_t>& dims) {
  out.write(kMagic, 4);
  const uint8_t version = kVersion;
  const uint8_t dt = static_cast<uint8_t>(dtype);
  const uint8_t ndim = static_cast<uint8_t>(dims.size());
  out.put(static_cast<char>(version));
  out.put(static_cast<char>(dt));
  out.put(static_cast<char>(ndim));
  out.write(reinterpret_cast<const char*>(dims.data()), static_cast<std::streamsize>(dims.size() * 4));
}

void finish_write(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw storage_error("failed writing tensor file " + path.string());
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const std::vector<uint32_t>& dims,
                  const std::vector<float>& values) {
  check_dims(dims, values.size());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw storage_error("cannot open " + path.string() + " for writing");
  write_header(out, Dtype::f32, dims);
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * 4));
  finish_write(out, path);
}

void write_tensor(const std::filesystem::path& path, const std::vector<uint32_t>& dims,
                  const std::vector<uint8_t>& values) {
  check_dims(dims, values.size());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw storage_error("cannot open " + path.string() + " for writing");
  write_header(out, Dtype::u8, dims);
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size()));
  finish_write(out, path);
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw storage_error("cannot open " + path.string());

  char magic[4];
  uint8_t version = 0, dt = 0, ndim = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 1);
  in.read(reinterpret_cast<char*>(&dt), 1);
  in.read(reinterpret_cast<char*>(&ndim), 1);
  if (!in) throw format_error("truncated tensor header in " + path.string());
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw format_error("bad magic in " + path.string());
  if (version != kVersion)
    throw format_error("unsupported tensor version " + std::to_string(version) + " in " + path.string());
  if (dt > 1) throw format_error("unknown dtype code " + std::to_string(dt) + " in " + path.string());
  if (ndim < 1 || ndim > kMaxNdim)
    throw format_error("ndim " + std::to_string(ndim) + " out of range in " + path.string());

  Tensor t;
  t.dtype = static_cast<Dtype>(dt);
  t.dims.resize(ndim);
  in.read(reinterpret_cast<char*>(t.dims.data()), ndim * 4);
  if (!in) throw format_error("truncated dims in " + path.string());

  const size_t n = t.count();
  const size_t elem = t.dtype == Dtype::f32 ? 4 : 1;
  if (t.dtype == Dtype::f32) {
    t.f32.resize(n);
    in.read(reinterpret_cast<char*>(t.f32.data()), static_cast<std::streamsize>(n * elem));
  } else {
    t.u8.resize(n);
    in.read(reinterpret_cast<char*>(t.u8.data()), static_cast<std::streamsize>(n * elem));
  }
  if (static_cast<size_t>(in.gcount()) != n * elem)
    throw format_error("truncated payload in " + path.string());
  in.peek();
  if (!in.eof()) throw format_error("trailing bytes after payload in " + path.string());
  return t;
}

namespace {

json episode_meta(const Episode& e) {
  json events = json::array();
  for (const auto& ev : e.events) {
    events.push_back({{"class_id", ev.class_id},
                      {"start_frame", ev.start_frame},
                      {"end_frame", ev.end_frame},
                      {"visible_views", ev.visible_views},
                      {"band", {ev.band_lo, ev.band_hi}}});
  }
  json labels = json::array();
  for (int t = 0; t < e.t_raw; ++t) {
    json row = json::array();
    for (int c = 0; c < e.n_classes; ++c) row.push_back(static_cast<int>(e.frame_labels(t, c)));
    labels.push_back(row);
  }
  json mask = json::array();
  for (int n = 0; n < e.n_views; ++n) {
    json row = json::array();
    for (int t = 0; t < e.t_raw; ++t) row.push_back(static_cast<int>(e.human_mask(n, t)));
    mask.push_back(row);
  }
  json seq = json::array();
  for (uint8_t v : e.seq_label) seq.push_back(static_cast<int>(v));

  return json{{"episode_id", e.id},
              {"n_views", e.n_views},
              {"t_raw", e.t_raw},
              {"n_classes", e.n_classes},
              {"seed", e.seed},
              {"shape", {{"d", e.d}, {"h", e.h}, {"w", e.w}, {"f", e.f}}},
              {"frame_labels", labels},
              {"human_mask", mask},
              {"seq_label", seq},
              {"events", events}};
}

uint8_t binary_entry(const json& v, const char* what) {
  const int x = v.get<int>();
  if (x != 0 && x != 1) throw format_error(std::string(what) + " entries must be 0/1");
  return static_cast<uint8_t>(x);
}

}  // namespace

void write_episode(const std::filesystem::path& dir, const Episode& e) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw storage_error("cannot create episode directory " + dir.string());

  {
    std::ofstream meta(dir / "meta.json", std::ios::trunc);
    if (!meta) throw storage_error("cannot write meta.json in " + dir.string());
    meta << episode_meta(e).dump(2) << "\n";
    if (!meta.flush()) throw storage_error("failed writing meta.json in " + dir.string());
  }

  const auto tr = static_cast<uint32_t>(e.t_raw);
  for (int n = 0; n < e.n_views; ++n) {
    const std::string stem = "view" + std::to_string(n + 1);
    write_tensor(dir / (stem + "_visual.mtsf"),
                 {tr, static_cast<uint32_t>(e.d), static_cast<uint32_t>(e.h), static_cast<uint32_t>(e.w)},
                 e.visual[n]);
    write_tensor(dir / (stem + "_audio.mtsf"), {tr, static_cast<uint32_t>(e.f)}, e.audio[n].vec());
  }
}

Episode read_episode(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  std::ifstream meta(meta_path);
  if (!meta) throw format_error("missing meta.json in " + dir.string());
  json m;
  try {
    meta >> m;
  } catch (const json::exception& ex) {
    throw format_error("invalid meta.json in " + dir.string() + ": " + ex.what());
  }

  Episode e;
  try {
    e.id = m.at("episode_id").get<std::string>();
    e.n_views = m.at("n_views").get<int>();
    e.t_raw = m.at("t_raw").get<int>();
    e.n_classes = m.at("n_classes").get<int>();
    e.seed = m.at("seed").get<uint64_t>();
    const auto& shape = m.at("shape");
    e.d = shape.at("d").get<int>();
    e.h = shape.at("h").get<int>();
    e.w = shape.at("w").get<int>();
    e.f = shape.at("f").get<int>();

    const auto& labels = m.at("frame_labels");
    if (static_cast<int>(labels.size()) != e.t_raw)
      throw format_error("frame_labels row count does not match t_raw");
    e.frame_labels = Mat<uint8_t>(e.t_raw, e.n_classes);
    for (int t = 0; t < e.t_raw; ++t) {
      if (static_cast<int>(labels[t].size()) != e.n_classes)
        throw format_error("frame_labels width does not match n_classes");
      for (int c = 0; c < e.n_classes; ++c) e.frame_labels(t, c) = binary_entry(labels[t][c], "frame_labels");
    }

    const auto& mask = m.at("human_mask");
    if (static_cast<int>(mask.size()) != e.n_views)
      throw format_error("human_mask row count does not match n_views");
    e.human_mask = Mat<uint8_t>(e.n_views, e.t_raw);
    for (int n = 0; n < e.n_views; ++n) {
      if (static_cast<int>(mask[n].size()) != e.t_raw)
        throw format_error("human_mask width does not match t_raw");
      for (int t = 0; t < e.t_raw; ++t) e.human_mask(n, t) = binary_entry(mask[n][t], "human_mask");
    }

    const auto& seq = m.at("seq_label");
    if (static_cast<int>(seq.size()) != e.n_classes)
      throw format_error("seq_label length does not match n_classes");
    for (const auto& v : seq) e.seq_label.push_back(binary_entry(v, "seq_label"));

    for (const auto& ev : m.at("events")) {
      ActionEvent a;
      a.class_id = ev.at("class_id").get<int>();
      a.start_frame = ev.at("start_frame").get<int>();
      a.end_frame = ev.at("end_frame").get<int>();
      a.visible_views = ev.at("visible_views").get<std::vector<int>>();
      a.band_lo = ev.at("band")[0].get<int>();
      a.band_hi = ev.at("band")[1].get<int>();
      e.events.push_back(std::move(a));
    }
  } catch (const json::exception& ex) {
    throw format_error("invalid meta.json in " + dir.string() + ": " + ex.what());
  }

  for (int n = 0; n < e.n_views; ++n) {
    const std::string stem = "view" + std::to_string(n + 1);
    const auto vpath = dir / (stem + "_visual.mtsf");
    const auto apath = dir / (stem + "_audio.mtsf");
    if (!std::filesystem::exists(vpath)) throw format_error("missing " + vpath.string());
    if (!std::filesystem::exists(apath)) throw format_error("missing " + apath.string());

    Tensor vt = read_tensor(vpath);
    if (vt.dtype != Dtype::f32 || vt.dims.size() != 4 || static_cast<int>(vt.dims[0]) != e.t_raw ||
        static_cast<int>(vt.dims[1]) != e.d || static_cast<int>(vt.dims[2]) != e.h ||
        static_cast<int>(vt.dims[3]) != e.w)
      throw format_error("visual tensor dims disagree with meta in " + vpath.string());
    e.visual.push_back(std::move(vt.f32));

    Tensor at = read_tensor(apath);
    if (at.dtype != Dtype::f32 || at.dims.size() != 2 || static_cast<int>(at.dims[0]) != e.t_raw ||
        static_cast<int>(at.dims[1]) != e.f)
      throw format_error("audio tensor dims disagree with meta in " + apath.string());
    Mat<float> audio(e.t_raw, e.f);
    audio.vec() = std::move(at.f32);
    e.audio.push_back(std::move(audio));
  }
  return e;
}

void write_manifest(const std::filesystem::path& dataset_dir, const Manifest& manifest) {
  json m{{"episode_ids", manifest.episode_ids},
         {"gen_config", manifest.gen_config_json.empty() ? json::object()
                                                         : json::parse(manifest.gen_config_json)},
         {"seed", manifest.seed}};
  std::ofstream out(dataset_dir / "manifest.json", std::ios::trunc);
  if (!out) throw storage_error("cannot write manifest.json in " + dataset_dir.string());
  out << m.dump(2) << "\n";
  if (!out.flush()) throw storage_error("failed writing manifest.json in " + dataset_dir.string());
}

Manifest read_manifest(const std::filesystem::path& dataset_dir) {
  std::ifstream in(dataset_dir / "manifest.json");
  if (!in) throw format_error("missing manifest.json in " + dataset_dir.string());
  json m;
  try {
    in >> m;
    Manifest out;
    out.episode_ids = m.at("episode_ids").get<std::vector<std::string>>();
    out.gen_config_json = m.at("gen_config").dump();
    out.seed = m.at("seed").get<uint64_t>();
    return out;
  } catch (const json::exception& ex) {
    throw format_error("invalid manifest.json in " + dataset_dir.string() + ": " + ex.what());
  }
}

}  // namespace mtsf::storage
