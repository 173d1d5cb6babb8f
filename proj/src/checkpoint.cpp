#include "zssbir/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "zssbir/data.hpp"

namespace zssbir {
namespace {

constexpr char kMagic[4] = {'Z', 'S', 'C', 'K'};

struct NetShape {
  nn::Activation hidden = nn::Activation::linear;
  nn::Activation output = nn::Activation::linear;
  std::vector<std::size_t> dims;
};

// Flattened view of a model: what gets written and what decoding rebuilds.
struct Parts {
  std::vector<double> scalars;
  std::vector<nn::Mlp> nets;
  std::vector<Matrix> matrices;
};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

nn::Activation activation_from_byte(std::uint8_t b) {
  if (b > static_cast<std::uint8_t>(nn::Activation::sigmoid)) {
    throw FormatError("checkpoint: unknown activation code " + std::to_string(b));
  }
  return static_cast<nn::Activation>(b);
}

std::size_t as_count(double v, const char* what) {
  if (!(v >= 0.0) || v != std::floor(v) || v > 9.0e15) {
    throw FormatError(std::string("checkpoint: ") + what + " is not a non-negative integer");
  }
  return static_cast<std::size_t>(v);
}

bool as_flag(double v, const char* what) {
  if (v != 0.0 && v != 1.0) throw FormatError(std::string("checkpoint: ") + what + " must be 0 or 1");
  return v == 1.0;
}

Parts flatten(const AnyModel& model) {
  Parts p;
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, generative::CvaeModel>) {
          p.scalars = {m.lambda_recons, static_cast<double>(m.d_latent)};
          p.nets = {m.encoder, m.decoder, m.regressor};
        } else if constexpr (std::is_same_v<M, generative::CaaeModel>) {
          p.scalars = {m.lambda_recons, static_cast<double>(m.d_latent), m.nonsaturating ? 1.0 : 0.0};
          p.nets = {m.encoder, m.decoder, m.discriminator, m.regressor};
        } else if constexpr (std::is_same_v<M, baselines::LinearMap>) {
          p.scalars = {static_cast<double>(m.meta.method), m.meta.ridge, m.meta.gamma,
                       m.meta.lambda, m.meta.beta, m.meta.objective};
          p.matrices = {m.w};
        } else {
          p.scalars = {static_cast<double>(m.embed_dim), static_cast<double>(m.loss), m.margin_or_q};
          p.nets = {m.sketch_net, m.image_net};
        }
      },
      model);
  return p;
}

struct Expected {
  std::size_t scalars, nets, matrices;
};

Expected expected_counts(ModelKind k) {
  switch (k) {
    case ModelKind::cvae: return {2, 3, 0};
    case ModelKind::caae: return {3, 4, 0};
    case ModelKind::linear_map: return {6, 0, 1};
    case ModelKind::embedding_pair: return {3, 2, 0};
  }
  throw FormatError("checkpoint: unknown model kind");
}

AnyModel rebuild(ModelKind kind, Parts p) {
  switch (kind) {
    case ModelKind::cvae: {
      generative::CvaeModel m;
      m.lambda_recons = p.scalars[0];
      m.d_latent = as_count(p.scalars[1], "d_latent");
      m.encoder = std::move(p.nets[0]);
      m.decoder = std::move(p.nets[1]);
      m.regressor = std::move(p.nets[2]);
      m.validate();
      return m;
    }
    case ModelKind::caae: {
      generative::CaaeModel m;
      m.lambda_recons = p.scalars[0];
      m.d_latent = as_count(p.scalars[1], "d_latent");
      m.nonsaturating = as_flag(p.scalars[2], "nonsaturating");
      m.encoder = std::move(p.nets[0]);
      m.decoder = std::move(p.nets[1]);
      m.discriminator = std::move(p.nets[2]);
      m.regressor = std::move(p.nets[3]);
      m.validate();
      return m;
    }
    case ModelKind::linear_map: {
      baselines::LinearMap m;
      const std::size_t method = as_count(p.scalars[0], "linear method");
      if (method > static_cast<std::size_t>(baselines::LinearMethod::sae)) {
        throw FormatError("checkpoint: unknown linear method " + std::to_string(method));
      }
      m.meta.method = static_cast<baselines::LinearMethod>(method);
      m.meta.ridge = p.scalars[1];
      m.meta.gamma = p.scalars[2];
      m.meta.lambda = p.scalars[3];
      m.meta.beta = p.scalars[4];
      m.meta.objective = p.scalars[5];
      m.w = std::move(p.matrices[0]);
      return m;
    }
    case ModelKind::embedding_pair: {
      baselines::EmbeddingPair m;
      m.embed_dim = as_count(p.scalars[0], "embed_dim");
      const std::size_t loss = as_count(p.scalars[1], "embedding loss");
      if (loss > static_cast<std::size_t>(baselines::EmbeddingLoss::triplet_fine)) {
        throw FormatError("checkpoint: unknown embedding loss " + std::to_string(loss));
      }
      m.loss = static_cast<baselines::EmbeddingLoss>(loss);
      m.margin_or_q = p.scalars[2];
      m.sketch_net = std::move(p.nets[0]);
      m.image_net = std::move(p.nets[1]);
      if (m.sketch_net.output_dim() != m.embed_dim || m.image_net.output_dim() != m.embed_dim) {
        throw ConsistencyError("checkpoint: embedding branches disagree with embed_dim");
      }
      return m;
    }
  }
  throw FormatError("checkpoint: unknown model kind");
}

}  // namespace

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::cvae: return "cvae";
    case ModelKind::caae: return "caae";
    case ModelKind::linear_map: return "linear_map";
    case ModelKind::embedding_pair: return "embedding_pair";
  }
  return "unknown";
}

ModelKind kind_of(const AnyModel& model) {
  switch (model.index()) {
    case 0: return ModelKind::cvae;
    case 1: return ModelKind::caae;
    case 2: return ModelKind::linear_map;
    default: return ModelKind::embedding_pair;
  }
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> encode_checkpoint(const AnyModel& model) {
  const Parts p = flatten(model);
  Writer head;
  for (char c : kMagic) head.u8(static_cast<std::uint8_t>(c));
  head.u32(kCheckpointVersion);
  head.u32(static_cast<std::uint32_t>(kind_of(model)));
  head.u32(static_cast<std::uint32_t>(p.scalars.size()));
  head.u32(static_cast<std::uint32_t>(p.nets.size()));
  for (const auto& net : p.nets) {
    head.u32(static_cast<std::uint32_t>(net.layers.size()));
    head.u8(static_cast<std::uint8_t>(net.hidden));
    head.u8(static_cast<std::uint8_t>(net.output));
    head.u16(0);
    for (std::size_t d : net.dims()) head.u64(d);
  }
  head.u32(static_cast<std::uint32_t>(p.matrices.size()));
  for (const auto& m : p.matrices) {
    head.u64(m.rows());
    head.u64(m.cols());
  }

  Writer payload;
  for (double v : p.scalars) payload.f64(v);
  for (const auto& net : p.nets) {
    for (const auto& layer : net.layers) {
      for (double v : layer.weight.values()) payload.f64(v);
      for (double v : layer.bias) payload.f64(v);
    }
  }
  for (const auto& m : p.matrices) {
    for (double v : m.values()) payload.f64(v);
  }

  auto& out = head.bytes();
  const auto& body = payload.bytes();
  head.u64(body.size());
  out.insert(out.end(), body.begin(), body.end());
  head.u64(fnv1a64(body));
  return std::move(out);
}

AnyModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t kind_raw = r.u32();
  if (kind_raw < 1 || kind_raw > 4) throw FormatError("checkpoint: unknown model kind " + std::to_string(kind_raw));
  const auto kind = static_cast<ModelKind>(kind_raw);
  const Expected want = expected_counts(kind);

  const std::size_t n_scalars = r.u32();
  const std::size_t n_nets = r.u32();
  if (n_scalars != want.scalars || n_nets != want.nets) {
    throw FormatError("checkpoint header does not match a " + std::string(to_string(kind)) + " model");
  }
  std::vector<NetShape> shapes(n_nets);
  std::uint64_t expected_values = n_scalars;
  for (auto& s : shapes) {
    const std::uint32_t n_layers = r.u32();
    if (n_layers == 0 || n_layers > 64) throw FormatError("checkpoint: implausible layer count");
    s.hidden = activation_from_byte(r.u8());
    s.output = activation_from_byte(r.u8());
    if (r.u16() != 0) throw FormatError("checkpoint: reserved header bytes are not zero");
    for (std::uint32_t i = 0; i <= n_layers; ++i) {
      const std::uint64_t d = r.u64();
      if (d == 0 || d > (1ULL << 24)) throw FormatError("checkpoint: implausible layer width");
      s.dims.push_back(static_cast<std::size_t>(d));
    }
    for (std::size_t i = 0; i + 1 < s.dims.size(); ++i) expected_values += (s.dims[i] + 1) * s.dims[i + 1];
  }
  const std::size_t n_matrices = r.u32();
  if (n_matrices != want.matrices) {
    throw FormatError("checkpoint header does not match a " + std::string(to_string(kind)) + " model");
  }
  std::vector<std::pair<std::size_t, std::size_t>> mat_shapes;
  for (std::size_t i = 0; i < n_matrices; ++i) {
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    if (rows > (1ULL << 24) || cols > (1ULL << 24)) throw FormatError("checkpoint: implausible matrix shape");
    mat_shapes.emplace_back(rows, cols);
    expected_values += rows * cols;
  }
  const std::uint64_t payload_bytes = r.u64();
  if (payload_bytes != expected_values * 8) {
    throw FormatError("checkpoint payload length disagrees with its dimension header");
  }
  if (r.remaining() != payload_bytes + 8) {
    throw FormatError(r.remaining() < payload_bytes + 8 ? "checkpoint truncated" : "trailing bytes after checkpoint");
  }
  const auto payload = r.take(static_cast<std::size_t>(payload_bytes));
  if (r.u64() != fnv1a64(payload)) throw ChecksumError("checkpoint payload checksum mismatch (file corrupted)");

  Reader pr(payload);
  Parts p;
  for (std::size_t i = 0; i < n_scalars; ++i) p.scalars.push_back(pr.f64());
  for (const auto& s : shapes) {
    nn::Mlp net;
    net.hidden = s.hidden;
    net.output = s.output;
    for (std::size_t l = 0; l + 1 < s.dims.size(); ++l) {
      nn::Layer layer{Matrix(s.dims[l], s.dims[l + 1]), Vector(s.dims[l + 1])};
      for (double& v : layer.weight.values()) v = pr.f64();
      for (double& v : layer.bias) v = pr.f64();
      net.layers.push_back(std::move(layer));
    }
    p.nets.push_back(std::move(net));
  }
  for (const auto& [rows, cols] : mat_shapes) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = pr.f64();
    p.matrices.push_back(std::move(m));
  }
  return rebuild(kind, std::move(p));
}

void save_checkpoint(const AnyModel& model, const std::string& path) {
  write_file_bytes(path, encode_checkpoint(model));
}

AnyModel load_checkpoint(const std::string& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace zssbir
