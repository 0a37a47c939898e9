#include "sake/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sake {

namespace {

std::string shape_field(const Shape& shape) {
  if (shape.empty()) return "scalar";
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s;
}

Shape parse_shape_field(const std::string& s) {
  if (s == "scalar") return {};
  Shape shape;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t next = s.find('x', pos);
    if (next == std::string::npos) next = s.size();
    shape.push_back(std::stoll(s.substr(pos, next - pos)));
    pos = next + 1;
  }
  return shape;
}

void write_le_doubles(std::ostream& os, const std::vector<double>& v) {
  for (double d : v) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    os.write(buf, 8);
  }
}

void read_le_doubles(std::istream& is, std::vector<double>& v) {
  for (double& d : v) {
    char buf[8];
    is.read(buf, 8);
    if (!is) throw std::runtime_error("checkpoint: truncated data section");
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    std::memcpy(&d, &bits, 8);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const MetaMap& meta,
                     const std::vector<std::pair<std::string, Tensor>>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os << "SAKE-CKPT v1\n";
  os << "meta";
  for (const auto& [k, v] : meta) os << " " << k << "=" << v;
  os << "\n";
  int64_t offset = 0;
  for (const auto& [name, t] : params) {
    os << "param " << name << " " << shape_field(t.shape()) << " " << offset << "\n";
    offset += t.numel() * 8;
  }
  os << "data\n";
  for (const auto& [name, t] : params) write_le_doubles(os, t.value());
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

std::string LoadedCheckpoint::meta_value(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  throw std::runtime_error("checkpoint metadata missing key: " + key);
}

bool LoadedCheckpoint::has_meta(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return true;
  }
  return false;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(is, line) || line != "SAKE-CKPT v1") {
    throw std::runtime_error("not a SAKE checkpoint: " + path);
  }
  LoadedCheckpoint out;
  struct Entry {
    std::string name;
    Shape shape;
    int64_t offset;
  };
  std::vector<Entry> entries;
  while (std::getline(is, line)) {
    if (line == "data") break;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "meta") {
      std::string kv;
      while (ls >> kv) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) throw std::runtime_error("checkpoint: malformed meta " + kv);
        out.meta.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
      }
    } else if (tag == "param") {
      Entry e;
      std::string shape_s;
      ls >> e.name >> shape_s >> e.offset;
      if (!ls) throw std::runtime_error("checkpoint: malformed param line: " + line);
      e.shape = parse_shape_field(shape_s);
      entries.push_back(std::move(e));
    } else {
      throw std::runtime_error("checkpoint: unexpected line: " + line);
    }
  }
  int64_t expected_offset = 0;
  for (const Entry& e : entries) {
    if (e.offset != expected_offset) {
      throw std::runtime_error("checkpoint: offset mismatch for " + e.name);
    }
    Tensor t(e.shape);
    read_le_doubles(is, t.value());
    out.tensors.emplace(e.name, std::move(t));
    expected_offset += shape_numel(e.shape) * 8;
  }
  return out;
}

MetaMap sake_config_meta(const SakeConfig& c) {
  MetaMap m;
  m.emplace_back("depth", std::to_string(c.depth));
  m.emplace_back("width", std::to_string(c.width));
  m.emplace_back("n_lambda", std::to_string(c.lambda_count()));
  m.emplace_back("heads", std::to_string(c.heads));
  m.emplace_back("n_rbf", std::to_string(c.n_rbf));
  {
    std::ostringstream os;
    os.precision(17);
    os << c.d_max;
    m.emplace_back("d_max", os.str());
  }
  {
    std::ostringstream os;
    os.precision(17);
    os << c.cutoff;
    m.emplace_back("cutoff", os.str());
  }
  m.emplace_back("attr_dim", std::to_string(c.attr_dim));
  m.emplace_back("dim", std::to_string(c.dim));
  m.emplace_back("seed", std::to_string(c.seed));
  return m;
}

SakeConfig sake_config_from_meta(const LoadedCheckpoint& ckpt) {
  SakeConfig c;
  c.depth = std::stoll(ckpt.meta_value("depth"));
  c.width = std::stoll(ckpt.meta_value("width"));
  c.n_lambda = std::stoll(ckpt.meta_value("n_lambda"));
  c.heads = std::stoll(ckpt.meta_value("heads"));
  c.n_rbf = std::stoll(ckpt.meta_value("n_rbf"));
  c.d_max = std::stod(ckpt.meta_value("d_max"));
  c.cutoff = std::stod(ckpt.meta_value("cutoff"));
  c.attr_dim = std::stoll(ckpt.meta_value("attr_dim"));
  c.dim = std::stoll(ckpt.meta_value("dim"));
  c.seed = std::stoull(ckpt.meta_value("seed"));
  return c;
}

void fill_parameters(const LoadedCheckpoint& ckpt,
                     const std::vector<std::pair<std::string, Tensor>>& params,
                     const std::string& prefix) {
  for (const auto& [name, t] : params) {
    const auto it = ckpt.tensors.find(prefix + name);
    if (it == ckpt.tensors.end()) {
      throw std::runtime_error("checkpoint missing parameter: " + prefix + name);
    }
    if (it->second.shape() != t.shape()) {
      throw std::runtime_error("checkpoint shape mismatch for " + prefix + name + ": stored " +
                               shape_str(it->second.shape()) + ", model wants " +
                               shape_str(t.shape()));
    }
    Tensor dst = t;
    dst.value() = it->second.value();
  }
}

void save_model(const std::string& path, const SakeModelParams& model) {
  MetaMap meta;
  meta.emplace_back("kind", "sake");
  for (auto& kv : sake_config_meta(model.config)) meta.push_back(std::move(kv));
  save_checkpoint(path, meta, named_parameters(model));
}

SakeModelParams load_model(const std::string& path) {
  LoadedCheckpoint ckpt = load_checkpoint(path);
  if (ckpt.meta_value("kind") != "sake") {
    throw std::runtime_error("checkpoint kind is not a sake model: " + path);
  }
  SakeModelParams model = make_sake_model(sake_config_from_meta(ckpt));
  fill_parameters(ckpt, named_parameters(model));
  return model;
}

}  // namespace sake
