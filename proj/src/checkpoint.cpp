#include "nrfc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "nrfc/config.hpp"

namespace nrfc {
namespace {

constexpr char kMagic[8] = {'N', 'R', 'F', 'C', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) fail(ErrorCode::kFormat, "truncated checkpoint");
  return v;
}

void put_values(std::ostream& out, const double* data, Eigen::Index n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

void get_values(std::istream& in, double* data, Eigen::Index n) {
  if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)))) {
    fail(ErrorCode::kFormat, "truncated checkpoint payload");
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  static_assert(std::endian::native == std::endian::little);
  Json header;
  header["architecture"] = ckpt.model.arch();
  header["technique"] = ckpt.technique;
  header["features"] = ckpt.features;
  header["precision"] = to_string(ckpt.precision);
  header["epoch"] = ckpt.epoch;
  header["sample_rate"] = ckpt.sample_rate;
  Json tensors = Json::array();
  for (const auto& p : ckpt.model.params()) {
    tensors.push_back(Json{{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  }
  header["tensors"] = tensors;
  const auto& opt = ckpt.optimizer;
  const bool has_moments = !opt.first_moment.empty();
  header["optimizer"] = Json{{"beta1", opt.beta1}, {"beta2", opt.beta2},           {"eps", opt.eps},
                             {"weight_decay", opt.weight_decay}, {"step", opt.step}, {"has_moments", has_moments}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put(out, Checkpoint::kVersion);
  put(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : ckpt.model.params()) put_values(out, p.value.data(), p.value.size());
  for (const auto& s : ckpt.model.norm_stats()) {
    put_values(out, s.running_mean.data(), s.running_mean.size());
    put_values(out, s.running_var.data(), s.running_var.size());
  }
  if (has_moments) {
    for (const auto& m : opt.first_moment) put_values(out, m.data(), m.size());
    for (const auto& v : opt.second_moment) put_values(out, v.data(), v.size());
  }
  if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open checkpoint: " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorCode::kFormat, "not a checkpoint file: " + path.string());
  }
  const auto version = get<std::uint32_t>(in);
  require(version == Checkpoint::kVersion, ErrorCode::kFormat, "unsupported checkpoint version");
  const auto len = get<std::uint64_t>(in);
  require(len < (1ULL << 30), ErrorCode::kFormat, "implausible checkpoint header length");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) fail(ErrorCode::kFormat, "truncated checkpoint header");

  Checkpoint ckpt;
  Json header;
  try {
    header = Json::parse(text);
    const Architecture arch = header.at("architecture").get<Architecture>();
    ckpt.model = Model<double>(arch, 0);
    ckpt.technique = header.at("technique").get<TechniqueConfig>();
    ckpt.features = header.at("features").get<FeatureConfig>();
    ckpt.precision = parse_precision(header.at("precision").get<std::string>());
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.sample_rate = header.at("sample_rate").get<int>();
  } catch (const Json::exception& e) {
    fail(ErrorCode::kFormat, std::string("bad checkpoint header: ") + e.what());
  }
  const Json& tensors = header.at("tensors");
  require(tensors.size() == ckpt.model.params().size(), ErrorCode::kFormat, "checkpoint tensor count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& p = ckpt.model.params()[i];
    require(tensors[i].at("name").get<std::string>() == p.name &&
                tensors[i].at("rows").get<Eigen::Index>() == p.value.rows() &&
                tensors[i].at("cols").get<Eigen::Index>() == p.value.cols(),
            ErrorCode::kFormat, "checkpoint tensor layout does not match its architecture");
    get_values(in, p.value.data(), p.value.size());
  }
  for (auto& s : ckpt.model.norm_stats()) {
    get_values(in, s.running_mean.data(), s.running_mean.size());
    get_values(in, s.running_var.data(), s.running_var.size());
  }
  const Json& opt = header.at("optimizer");
  auto& state = ckpt.optimizer;
  state.beta1 = opt.at("beta1").get<double>();
  state.beta2 = opt.at("beta2").get<double>();
  state.eps = opt.at("eps").get<double>();
  state.weight_decay = opt.at("weight_decay").get<double>();
  state.step = opt.at("step").get<long>();
  if (opt.at("has_moments").get<bool>()) {
    for (auto* moments : {&state.first_moment, &state.second_moment}) {
      for (const auto& p : ckpt.model.params()) {
        Mat<double> m(p.value.rows(), p.value.cols());
        get_values(in, m.data(), m.size());
        moments->push_back(std::move(m));
      }
    }
  }
  return ckpt;
}

}  // namespace nrfc
