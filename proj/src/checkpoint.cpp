#include "invlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "invlab/error.hpp"

namespace invlab {

namespace {

constexpr char kMagic[4] = {'I', 'N', 'V', 'L'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <typename T>
void write_scalar(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_scalar(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw CheckpointError("checkpoint: truncated file");
  return to_little(v);
}

void write_tensors(std::ostream& os, const ModelParams& p) {
  for (const auto& t : p.tensors())
    for (Eigen::Index i = 0; i < t.size(); ++i) write_scalar<double>(os, t.data[i]);
}

void read_tensors(std::istream& is, ModelParams& p) {
  for (auto& t : p.tensors())
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = read_scalar<double>(is);
}

nlohmann::json tensor_table(const ModelParams& p) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& t : p.tensors()) table.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  return table;
}

std::vector<double> to_vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void to_json(nlohmann::json& j, const ModelMeta& meta) {
  std::vector<std::size_t> layers{meta.input_dim()};
  layers.insert(layers.end(), meta.hidden.begin(), meta.hidden.end());
  layers.push_back(meta.dim);
  j = {{"dim", meta.dim},
       {"embed_dim", meta.embed_dim},
       {"time_features", kTimeFeatures},
       {"hidden", meta.hidden},
       {"layer_sizes", layers},
       {"activation", "silu"},
       {"num_classes", meta.num_classes},
       {"objective", to_string(meta.objective)},
       {"flow_direction", "prior_t0_data_t1"},
       {"tight_gain", meta.tight_gain},
       {"data_mean", to_vec(meta.data_stats.mean)},
       {"data_std", to_vec(meta.data_stats.stddev)},
       {"dataset", meta.dataset},
       {"diffusion_steps", meta.diffusion_steps},
       {"beta_min", meta.beta_min},
       {"beta_max", meta.beta_max},
       {"init_seed", meta.init_seed},
       {"train_seed", meta.train_seed}};
}

void from_json(const nlohmann::json& j, ModelMeta& meta) {
  meta.dim = j.at("dim").get<std::size_t>();
  meta.embed_dim = j.at("embed_dim").get<std::size_t>();
  if (j.at("time_features").get<int>() != kTimeFeatures) throw CheckpointError("checkpoint: time feature count mismatch");
  meta.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  meta.num_classes = j.at("num_classes").get<int>();
  meta.objective = parse_objective(j.at("objective").get<std::string>());
  meta.tight_gain = j.at("tight_gain").get<double>();
  meta.data_stats.mean = from_vec(j.at("data_mean").get<std::vector<double>>());
  meta.data_stats.stddev = from_vec(j.at("data_std").get<std::vector<double>>());
  meta.dataset = j.at("dataset").get<GmmSpec>();
  meta.diffusion_steps = j.at("diffusion_steps").get<int>();
  meta.beta_min = j.at("beta_min").get<double>();
  meta.beta_max = j.at("beta_max").get<double>();
  meta.init_seed = j.at("init_seed").get<std::uint64_t>();
  meta.train_seed = j.at("train_seed").get<std::uint64_t>();
}

void save_checkpoint(const std::filesystem::path& path, const ModelMeta& meta, const ModelParams& params,
                     const AdamState* optimizer, const nlohmann::json& config) {
  if (!params.same_shape(ModelParams::zeros(meta))) throw CheckpointError("save_checkpoint: params do not match meta");
  nlohmann::json header = {{"meta", meta}, {"tensors", tensor_table(params)}, {"config", config}};
  if (optimizer) {
    header["optimizer"] = {{"kind", "adam"},
                           {"step", optimizer->step},
                           {"beta1", optimizer->beta1},
                           {"beta2", optimizer->beta2},
                           {"eps", optimizer->eps}};
  }
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("save_checkpoint: cannot open " + path.string());
  os.write(kMagic, 4);
  write_scalar<std::uint32_t>(os, kCheckpointVersion);
  write_scalar<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_tensors(os, params);
  if (optimizer) {
    write_tensors(os, optimizer->m);
    write_tensors(os, optimizer->v);
  }
  if (!os) throw Error("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("load_checkpoint: cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError("load_checkpoint: " + path.string() + " is not an invlab checkpoint (bad magic)");
  const auto version = read_scalar<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw CheckpointError("load_checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const auto len = read_scalar<std::uint64_t>(is);
  if (len > (std::uint64_t{1} << 30)) throw CheckpointError("load_checkpoint: metadata block too large");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw CheckpointError("load_checkpoint: truncated metadata");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("load_checkpoint: corrupt metadata: ") + e.what());
  }

  Checkpoint ck;
  try {
    ck.meta = header.at("meta").get<ModelMeta>();
    ck.config = header.value("config", nlohmann::json::object());
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("load_checkpoint: bad metadata: ") + e.what());
  }
  ck.params = ModelParams::zeros(ck.meta);
  if (header.at("tensors") != tensor_table(ck.params))
    throw CheckpointError("load_checkpoint: tensor table does not match the declared layer sizes");
  read_tensors(is, ck.params);
  if (header.contains("optimizer")) {
    AdamState st = AdamState::for_params(ck.meta);
    const auto& o = header.at("optimizer");
    st.step = o.at("step").get<std::int64_t>();
    st.beta1 = o.at("beta1").get<double>();
    st.beta2 = o.at("beta2").get<double>();
    st.eps = o.at("eps").get<double>();
    read_tensors(is, st.m);
    read_tensors(is, st.v);
    ck.optimizer = std::move(st);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw CheckpointError("load_checkpoint: trailing bytes");
  return ck;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("file_hash: cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace invlab
