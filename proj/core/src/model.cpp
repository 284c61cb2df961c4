// SPDX-License-Identifier: Apache-2.0
#include "coslearn/model.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "coslearn/error.hpp"
#include "coslearn/random.hpp"

namespace coslearn {

void MlpConfig::validate() const {
  if (input_dim == 0) throw ValidationError("model input_dim must be positive");
  if (output_dim == 0) throw ValidationError("model output_dim must be positive");
  for (std::size_t i = 0; i < hidden_layers.size(); ++i) {
    if (hidden_layers[i] == 0) {
      throw ValidationError("hidden layer " + std::to_string(i) + " has zero width");
    }
  }
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

bool ModelState::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weight.all_finite() || !l.bias.all_finite()) return false;
  }
  return true;
}

bool operator==(const ModelState& a, const ModelState& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (!(a.layers[i].weight == b.layers[i].weight) || !(a.layers[i].bias == b.layers[i].bias)) {
      return false;
    }
  }
  return a.config.input_dim == b.config.input_dim && a.config.output_dim == b.config.output_dim &&
         a.config.hidden_layers == b.config.hidden_layers && a.config.seed == b.config.seed;
}

ModelState init_model(const MlpConfig& cfg) {
  cfg.validate();
  ModelState m{cfg, {}};
  Rng rng(derive_seed(cfg.seed, {0x6d6f64656cULL}));
  std::vector<std::size_t> widths{cfg.input_dim};
  widths.insert(widths.end(), cfg.hidden_layers.begin(), cfg.hidden_layers.end());
  widths.push_back(cfg.output_dim);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
    DenseLayer layer{Tensor(Shape{fan_in, fan_out}), Tensor(Shape{fan_out})};
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& w : layer.weight.data()) w = rng.uniform(-bound, bound);
    m.layers.push_back(std::move(layer));
  }
  return m;
}

BoundModel bind_parameters(const ModelState& m, Tape& tape) {
  BoundModel b;
  for (const auto& l : m.layers) {
    b.weights.push_back(tape.parameter(l.weight));
    b.biases.push_back(tape.parameter(l.bias));
  }
  return b;
}

BoundModel bind_constants(const ModelState& m, Tape& tape) {
  BoundModel b;
  for (const auto& l : m.layers) {
    b.weights.push_back(tape.constant(l.weight));
    b.biases.push_back(tape.constant(l.bias));
  }
  return b;
}

Var forward(const BoundModel& m, Var x) {
  if (m.weights.empty()) throw ValidationError("model has no layers");
  const std::size_t in = m.weights.front().value().rows();
  if (x.value().rank() != 2 || x.value().cols() != in) {
    throw DimensionError("forward: input " + shape_to_string(x.shape()) + " for input width " +
                         std::to_string(in));
  }
  Var h = x;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    h = ops::linear(h, m.weights[l], m.biases[l]);
    if (l + 1 < m.weights.size()) h = ops::relu(h);
  }
  return h;
}

Tensor predict(const ModelState& m, const Tensor& x) {
  Tape tape;
  BoundModel b = bind_constants(m, tape);
  return forward(b, tape.constant(x)).value();
}

namespace {

constexpr std::array<char, 8> kMagic{'C', 'S', 'L', 'M', 'O', 'D', 'E', 'L'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out_.write(reinterpret_cast<const char*>(b), 8);
  }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out_.write(reinterpret_cast<const char*>(b), 4);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void tensor(const Tensor& t) {
    u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) u64(d);
    for (double v : t.data()) f64(v);
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}
  std::uint64_t u64() {
    unsigned char b[8];
    read(b, 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    read(b, 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  Tensor tensor() {
    const std::uint32_t rank = u32();
    if (rank > 8) throw FormatError(path_ + ": implausible tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) {
      d = u64();
      if (d == 0 || d > (1ULL << 32)) throw FormatError(path_ + ": bad tensor dimension");
    }
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = f64();
    return Tensor(std::move(shape), std::move(data));
  }
  void read(unsigned char* dst, std::size_t n) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) {
      throw FormatError(path_ + ": truncated checkpoint");
    }
  }

 private:
  std::ifstream& in_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelState& m, const AuxHead* head) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  Writer w(out);
  w.u32(kCheckpointVersion);
  w.u64(m.config.input_dim);
  w.u32(static_cast<std::uint32_t>(m.config.hidden_layers.size()));
  for (std::size_t h : m.config.hidden_layers) w.u64(h);
  w.u64(m.config.output_dim);
  w.u64(m.config.seed);
  w.u32(static_cast<std::uint32_t>(m.layers.size()));
  for (const auto& l : m.layers) {
    w.tensor(l.weight);
    w.tensor(l.bias);
  }
  w.u32(head != nullptr ? 1 : 0);
  if (head != nullptr) {
    w.tensor(head->weight);
    w.tensor(head->bias);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Reader r(in, path.string());
  std::array<unsigned char, 8> magic{};
  r.read(magic.data(), magic.size());
  if (std::memcmp(magic.data(), kMagic.data(), kMagic.size()) != 0) {
    throw FormatError(path.string() + ": not a coslearn checkpoint");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  MlpConfig& cfg = ck.model.config;
  cfg.input_dim = r.u64();
  const std::uint32_t n_hidden = r.u32();
  if (n_hidden > 1024) throw FormatError(path.string() + ": implausible hidden layer count");
  cfg.hidden_layers.resize(n_hidden);
  for (auto& h : cfg.hidden_layers) h = r.u64();
  cfg.output_dim = r.u64();
  cfg.seed = r.u64();
  const std::uint32_t n_layers = r.u32();
  if (n_layers != n_hidden + 1) throw FormatError(path.string() + ": layer count disagrees with config");
  std::size_t fan_in = cfg.input_dim;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    DenseLayer l{r.tensor(), r.tensor()};
    const std::size_t fan_out = i + 1 < n_layers ? cfg.hidden_layers[i] : cfg.output_dim;
    if (l.weight.shape() != Shape{fan_in, fan_out} || l.bias.shape() != Shape{fan_out}) {
      throw FormatError(path.string() + ": layer " + std::to_string(i) + " shape disagrees with config");
    }
    fan_in = fan_out;
    ck.model.layers.push_back(std::move(l));
  }
  if (r.u32() == 1) ck.head = AuxHead{r.tensor(), r.tensor()};
  return ck;
}

}  // namespace coslearn
