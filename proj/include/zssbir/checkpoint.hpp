#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "zssbir/baselines.hpp"
#include "zssbir/errors.hpp"
#include "zssbir/generative.hpp"

namespace zssbir {

// Layout, all integers little-endian:
//   "ZSCK" · u32 version · u32 kind
//   u32 n_scalars
//   u32 n_nets, then per net: u32 n_layers · u8 hidden activation ·
//     u8 output activation · u16 zero · u64 dims[n_layers + 1]
//   u32 n_matrices, then per matrix: u64 rows · u64 cols
//   u64 payload byte count
//   payload: f64 scalars, then per net each layer's weight (row-major) and
//     bias, then each matrix (row-major)
//   u64 FNV-1a of the payload bytes
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelKind : std::uint32_t { cvae = 1, caae = 2, linear_map = 3, embedding_pair = 4 };

std::string_view to_string(ModelKind k);

using AnyModel =
    std::variant<generative::CvaeModel, generative::CaaeModel, baselines::LinearMap, baselines::EmbeddingPair>;

ModelKind kind_of(const AnyModel& model);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_checkpoint(const AnyModel& model);
AnyModel decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const AnyModel& model, const std::string& path);
AnyModel load_checkpoint(const std::string& path);

template <class Model>
Model checkpoint_as(AnyModel model) {
  if (auto* m = std::get_if<Model>(&model)) return std::move(*m);
  throw KindMismatchError("checkpoint holds a " + std::string(to_string(kind_of(model))) +
                          " model, not the requested kind");
}

template <class Model>
Model load_checkpoint_as(const std::string& path) {
  return checkpoint_as<Model>(load_checkpoint(path));
}

}  // namespace zssbir
