#include "gflow/io.hpp"

#include <bit>
#include <fstream>
#include <sstream>

namespace gflow {

const char* to_string(PersistenceKind k) {
  switch (k) {
    case PersistenceKind::io: return "io error";
    case PersistenceKind::malformed: return "malformed file";
    case PersistenceKind::version: return "version mismatch";
    case PersistenceKind::truncated: return "truncated file";
    case PersistenceKind::empty: return "empty file";
  }
  return "persistence error";
}

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PersistenceError(PersistenceKind::io, "cannot open " + path.string() + " for writing");
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw PersistenceError(PersistenceKind::io, "write failed for " + path.string());
}

void put_u64le(std::string& buf, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) buf.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

void put_f64(std::string& buf, double v) { put_u64le(buf, std::bit_cast<std::uint64_t>(v)); }

void put_u32(std::string& buf, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) buf.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

// Sequential little-endian reader over a byte buffer.
class Reader {
 public:
  Reader(const std::string& bytes, std::size_t pos, std::string what)
      : bytes_(bytes), pos_(pos), what_(std::move(what)) {}

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw PersistenceError(PersistenceKind::truncated, what_ + " ends early");
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += 8;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += 4;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_;
  std::string what_;
};

// Splits "<json header>\n<binary payload>" and parses the header.
std::pair<json, std::size_t> read_header(const std::string& bytes, const std::string& what) {
  if (bytes.empty()) throw PersistenceError(PersistenceKind::empty, what + " is empty");
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw PersistenceError(PersistenceKind::truncated, what + " header is incomplete");
  json header;
  try {
    header = json::parse(bytes.substr(0, nl));
  } catch (const json::exception& e) {
    throw PersistenceError(PersistenceKind::malformed, what + " header: " + e.what());
  }
  if (!header.is_object()) throw PersistenceError(PersistenceKind::malformed, what + " header is not an object");
  if (!header.contains("version"))
    throw PersistenceError(PersistenceKind::malformed, what + " header has no version");
  if (header["version"] != kFormatVersion)
    throw PersistenceError(PersistenceKind::version,
                           what + " has version " + header["version"].dump() + ", expected " +
                               std::to_string(kFormatVersion));
  return {header, nl + 1};
}

template <class T>
T header_field(const json& h, const char* key, const std::string& what) {
  try {
    return h.at(key).get<T>();
  } catch (const json::exception&) {
    throw PersistenceError(PersistenceKind::malformed, what + " header field '" + key + "' missing or invalid");
  }
}

void put_block(std::string& buf, const PointSet& z) {
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    for (int c = 0; c < 3; ++c) put_f64(buf, z.coords(i, c));
    for (Eigen::Index c = 0; c < z.feature_dim(); ++c) put_f64(buf, z.features(i, c));
  }
}

LatentGeometry read_block(Reader& r, Eigen::Index n, int k) {
  LatentGeometry z;
  z.coords.resize(n, 3);
  z.features.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) z.coords(i, c) = r.f64();
    for (int c = 0; c < k; ++c) z.features(i, c) = r.f64();
  }
  return z;
}

}  // namespace

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistenceError(PersistenceKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json to_json(const PointSet& g, const std::string& tag) {
  json coords = json::array(), features = json::array();
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    coords.push_back({g.coords(i, 0), g.coords(i, 1), g.coords(i, 2)});
    json row = json::array();
    for (Eigen::Index c = 0; c < g.feature_dim(); ++c) row.push_back(g.features(i, c));
    features.push_back(std::move(row));
  }
  json j = {{"n", g.size()}, {"coords", std::move(coords)}, {"features", std::move(features)}};
  if (!tag.empty()) j["tag"] = tag;
  return j;
}

Geometry geometry_from_json(const json& j) {
  try {
    const auto n = j.at("n").get<Eigen::Index>();
    const auto& cs = j.at("coords");
    const auto& fs = j.at("features");
    if (!cs.is_array() || !fs.is_array() || static_cast<Eigen::Index>(cs.size()) != n ||
        static_cast<Eigen::Index>(fs.size()) != n)
      throw PersistenceError(PersistenceKind::malformed, "row count disagrees with n");
    const auto d = n > 0 ? static_cast<Eigen::Index>(fs.at(0).size()) : 0;
    Coords x(n, 3);
    Features h(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& row = cs.at(static_cast<std::size_t>(i));
      if (row.size() != 3) throw PersistenceError(PersistenceKind::malformed, "coordinate row needs 3 entries");
      for (int c = 0; c < 3; ++c) x(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
      const auto& frow = fs.at(static_cast<std::size_t>(i));
      if (static_cast<Eigen::Index>(frow.size()) != d)
        throw PersistenceError(PersistenceKind::malformed, "ragged feature rows");
      for (Eigen::Index c = 0; c < d; ++c) h(i, c) = frow.at(static_cast<std::size_t>(c)).get<double>();
    }
    return make_geometry(std::move(x), std::move(h), j.value("tag", std::string{}));
  } catch (const json::exception& e) {
    throw PersistenceError(PersistenceKind::malformed, e.what());
  } catch (const PersistenceError&) {
    throw;
  } catch (const Error& e) {
    throw PersistenceError(PersistenceKind::malformed, e.what());
  }
}

void save_geometries(const fs::path& path, const std::vector<Geometry>& gs) {
  auto out = open_out(path);
  for (const auto& g : gs) out << to_json(g, g.tag).dump() << '\n';
  finish(out, path);
}

std::vector<Geometry> load_geometries(const fs::path& path, bool allow_empty) {
  std::ifstream in(path);
  if (!in) throw PersistenceError(PersistenceKind::io, "cannot open " + path.string());
  std::vector<Geometry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw PersistenceError(PersistenceKind::malformed,
                             path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      out.push_back(geometry_from_json(j));
    } catch (const PersistenceError& e) {
      throw PersistenceError(PersistenceKind::malformed, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (out.empty() && !allow_empty)
    throw PersistenceError(PersistenceKind::empty, "dataset file " + path.string() + " holds no geometries");
  return out;
}

json checkpoint_header(const Model& m) {
  const FlowArch& fa = m.flow.arch();
  json hist = json::object();
  for (const auto& [n, c] : m.size_histogram) hist[std::to_string(n)] = c;
  json arch = {{"identity_latent", m.identity_latent},
               {"latent_k", fa.latent_k},
               {"hidden", fa.hidden},
               {"layers", fa.layers},
               {"depth", fa.depth},
               {"coord_scale", fa.coord_scale},
               {"ae_hidden", m.identity_latent ? 0 : m.ae.arch().hidden},
               {"size_histogram", std::move(hist)}};
  if (m.latent_scale.size() > 0) {
    arch["latent_shift"] = std::vector<double>(m.latent_shift.data(), m.latent_shift.data() + m.latent_shift.size());
    arch["latent_scale"] = std::vector<double>(m.latent_scale.data(), m.latent_scale.data() + m.latent_scale.size());
  }
  return {{"arch", std::move(arch)},
          {"k", m.latent_k()},
          {"d", m.data_d},
          {"param_count", m.param_count()},
          {"flow_param_count", m.flow_params.size()},
          {"version", kFormatVersion}};
}

void save_checkpoint(const fs::path& path, const Model& m) {
  std::string buf = checkpoint_header(m).dump();
  buf.push_back('\n');
  for (double v : m.flow_params) put_f64(buf, v);
  for (double v : m.ae_params) put_f64(buf, v);
  auto out = open_out(path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  finish(out, path);
}

Model load_checkpoint(const fs::path& path) {
  const std::string bytes = read_bytes(path);
  const std::string what = "checkpoint " + path.string();
  auto [h, pos] = read_header(bytes, what);
  ModelConfig cfg;
  Model m;
  try {
    const json& a = h.at("arch");
    cfg.identity_latent = a.at("identity_latent").get<bool>();
    cfg.latent_k = a.at("latent_k").get<int>();
    cfg.hidden = a.at("hidden").get<int>();
    cfg.layers = a.at("layers").get<int>();
    cfg.depth = a.at("depth").get<int>();
    cfg.coord_scale = a.at("coord_scale").get<double>();
    if (!cfg.identity_latent) cfg.ae_hidden = a.at("ae_hidden").get<int>();
    cfg.data_d = h.at("d").get<int>();
    if (h.at("k").get<int>() != cfg.latent_k)
      throw PersistenceError(PersistenceKind::malformed, what + ": k disagrees with arch");
    m = make_model(cfg, 0);
    for (const auto& [n, c] : a.at("size_histogram").items()) m.size_histogram[std::stoi(n)] = c.get<long>();
    if (a.contains("latent_scale")) {
      const auto shift = a.at("latent_shift").get<std::vector<double>>();
      const auto scale = a.at("latent_scale").get<std::vector<double>>();
      if (static_cast<int>(shift.size()) != cfg.latent_k || static_cast<int>(scale.size()) != cfg.latent_k)
        throw PersistenceError(PersistenceKind::malformed, what + ": latent normalisation width mismatch");
      m.latent_shift = Eigen::Map<const Eigen::RowVectorXd>(shift.data(), cfg.latent_k);
      m.latent_scale = Eigen::Map<const Eigen::RowVectorXd>(scale.data(), cfg.latent_k);
    }
  } catch (const json::exception& e) {
    throw PersistenceError(PersistenceKind::malformed, what + ": " + e.what());
  } catch (const PersistenceError&) {
    throw;
  } catch (const std::exception& e) {
    throw PersistenceError(PersistenceKind::malformed, what + ": " + e.what());
  }
  const auto count = header_field<std::size_t>(h, "param_count", what);
  if (count != m.param_count())
    throw PersistenceError(PersistenceKind::malformed,
                           what + ": param_count " + std::to_string(count) + " does not match the architecture (" +
                               std::to_string(m.param_count()) + ")");
  Reader r(bytes, pos, what);
  r.need(count * 8);
  for (double& v : m.flow_params) v = r.f64();
  for (double& v : m.ae_params) v = r.f64();
  if (!r.at_end()) throw PersistenceError(PersistenceKind::malformed, what + " has trailing bytes");
  return m;
}

void save_pairs(const fs::path& path, const CouplingSet& pairs) {
  int k = 0;
  bool aligned = true;
  if (!pairs.empty()) {
    k = static_cast<int>(pairs.front().z0.feature_dim());
    aligned = pairs.front().aligned;
  }
  for (const auto& p : pairs) {
    validate(p);
    if (p.z0.feature_dim() != k) throw Error("coupling mixes latent widths");
    if (p.aligned != aligned) throw Error("coupling mixes aligned and unaligned pairs");
  }
  const json header = {{"count", pairs.size()}, {"k", k}, {"version", kFormatVersion}, {"aligned", aligned}};
  std::string buf = header.dump();
  buf.push_back('\n');
  for (const auto& p : pairs) {
    put_u32(buf, static_cast<std::uint32_t>(p.z0.size()));
    put_block(buf, p.z0);
    put_block(buf, p.z1);
    buf.push_back(static_cast<char>(p.source));
    buf.push_back(static_cast<char>(p.valid ? 1 : 0));
  }
  auto out = open_out(path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  finish(out, path);
}

CouplingSet load_pairs(const fs::path& path) {
  const std::string bytes = read_bytes(path);
  const std::string what = "empty coupling file " + path.string();
  if (bytes.empty()) throw PersistenceError(PersistenceKind::empty, what);
  auto [h, pos] = read_header(bytes, "coupling file " + path.string());
  const std::string name = "coupling file " + path.string();
  const auto count = header_field<std::size_t>(h, "count", name);
  const auto k = header_field<int>(h, "k", name);
  const bool aligned = h.value("aligned", false);
  if (k < 0) throw PersistenceError(PersistenceKind::malformed, name + ": negative k");
  CouplingSet out;
  out.reserve(count);
  Reader r(bytes, pos, name);
  for (std::size_t i = 0; i < count; ++i) {
    CouplingPair p;
    const auto n = static_cast<Eigen::Index>(r.u32());
    if (n < 1) throw PersistenceError(PersistenceKind::malformed, name + ": pair with no atoms");
    r.need(static_cast<std::size_t>(2 * n * (3 + k)) * 8 + 2);
    p.z0 = read_block(r, n, k);
    p.z1 = read_block(r, n, k);
    const std::uint8_t src = r.u8();
    if (src > 1) throw PersistenceError(PersistenceKind::malformed, name + ": unknown source byte");
    p.source = static_cast<CouplingSource>(src);
    const std::uint8_t valid = r.u8();
    if (valid > 1) throw PersistenceError(PersistenceKind::malformed, name + ": bad valid byte");
    p.valid = valid == 1;
    p.aligned = aligned;
    out.push_back(std::move(p));
  }
  if (!r.at_end()) throw PersistenceError(PersistenceKind::malformed, name + " has trailing bytes");
  return out;
}

json to_json(const TrainConfig& c) {
  return {{"lambda", c.lambda},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"sigma0", c.sigma0},
          {"reflow_rounds", c.reflow_rounds},
          {"purify", c.purify},
          {"seed", c.seed},
          {"use_omt", c.use_omt},
          {"omt_max_iters", c.omt_max_iters},
          {"reflow_pairs", c.reflow_pairs},
          {"reflow_epochs", c.reflow_epochs},
          {"reflow_fresh", c.reflow_fresh},
          {"ae_epochs", c.ae_epochs},
          {"ae_lr", c.ae_lr},
          {"identity_latent", c.model.identity_latent},
          {"latent_k", c.model.latent_k},
          {"hidden", c.model.hidden},
          {"layers", c.model.layers},
          {"depth", c.model.depth},
          {"coord_scale", c.model.coord_scale},
          {"ae_hidden", c.model.ae_hidden},
          {"solver", to_string(c.reflow_solver.method)},
          {"fixed_steps", c.reflow_solver.fixed_steps},
          {"rtol", c.reflow_solver.rtol},
          {"atol", c.reflow_solver.atol},
          {"initial_step", c.reflow_solver.initial_step},
          {"max_steps", c.reflow_solver.max_steps},
          {"min_pair_dist", c.validity.min_pair_dist},
          {"max_radius", c.validity.max_radius},
          {"onehot_margin", c.validity.onehot_margin}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw Error("config must be a JSON object");
  TrainConfig c;
  const json defaults = to_json(c);
  for (const auto& [key, _] : j.items())
    if (!defaults.contains(key)) throw Error("unknown config key: " + key);
  try {
    c.lambda = j.value("lambda", c.lambda);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.sigma0 = j.value("sigma0", c.sigma0);
    c.reflow_rounds = j.value("reflow_rounds", c.reflow_rounds);
    c.purify = j.value("purify", c.purify);
    c.seed = j.value("seed", c.seed);
    c.use_omt = j.value("use_omt", c.use_omt);
    c.omt_max_iters = j.value("omt_max_iters", c.omt_max_iters);
    c.reflow_pairs = j.value("reflow_pairs", c.reflow_pairs);
    c.reflow_epochs = j.value("reflow_epochs", c.reflow_epochs);
    c.reflow_fresh = j.value("reflow_fresh", c.reflow_fresh);
    c.ae_epochs = j.value("ae_epochs", c.ae_epochs);
    c.ae_lr = j.value("ae_lr", c.ae_lr);
    c.model.identity_latent = j.value("identity_latent", c.model.identity_latent);
    c.model.latent_k = j.value("latent_k", c.model.latent_k);
    c.model.hidden = j.value("hidden", c.model.hidden);
    c.model.layers = j.value("layers", c.model.layers);
    c.model.depth = j.value("depth", c.model.depth);
    c.model.coord_scale = j.value("coord_scale", c.model.coord_scale);
    c.model.ae_hidden = j.value("ae_hidden", c.model.ae_hidden);
    c.reflow_solver.method = solver_method_from_string(j.value("solver", to_string(c.reflow_solver.method)));
    c.reflow_solver.fixed_steps = j.value("fixed_steps", c.reflow_solver.fixed_steps);
    c.reflow_solver.rtol = j.value("rtol", c.reflow_solver.rtol);
    c.reflow_solver.atol = j.value("atol", c.reflow_solver.atol);
    c.reflow_solver.initial_step = j.value("initial_step", c.reflow_solver.initial_step);
    c.reflow_solver.max_steps = j.value("max_steps", c.reflow_solver.max_steps);
    c.validity.min_pair_dist = j.value("min_pair_dist", c.validity.min_pair_dist);
    c.validity.max_radius = j.value("max_radius", c.validity.max_radius);
    c.validity.onehot_margin = j.value("onehot_margin", c.validity.onehot_margin);
  } catch (const json::exception& e) {
    throw Error(std::string("bad config value: ") + e.what());
  }
  validate(c);
  validate(c.validity);
  return c;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw PersistenceError(PersistenceKind::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw PersistenceError(PersistenceKind::malformed, path.string() + ": " + e.what());
  }
}

}  // namespace gflow
