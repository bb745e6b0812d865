#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "sttrack/geometry/grid.hpp"
#include "sttrack/numerics/params.hpp"
#include "sttrack/pillars/pillars.hpp"

namespace sttrack::stlm {

using pillars::FeatureMap;

// Ablation switches.
enum class Variant {
  kFull,        // BoxConv(MaskConv(M) + F), Patch-Conv, sparse attention
  kDot,         // BoxConv(M * F)
  kNoMask,      // past frames skip mask fusion
  kNoBoxConv,   // MaskConv(M) + F
  kConvPatch,   // conv 3x3 then per-patch mean instead of PatchConv
  kDense,       // full softmax attention over all N*S tokens
  kPosEmbed,    // sinusoidal (time, space) embedding added to queries
};

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);
const std::vector<Variant>& all_variants();

struct StlmConfig {
  std::size_t c1 = 32;  // backbone channels
  std::size_t c2 = 32;  // after BoxConv; equals c1 since the current frame skips it
  std::size_t c3 = 64;  // token channels
  std::size_t c4 = 64;  // lifted channels fed back to the BEV map
  std::size_t patch_r = 4;
  std::size_t heads = 4;    // L
  std::size_t samples = 4;  // K
  Variant variant = Variant::kFull;

  void validate(const geom::GridConfig& grid) const;
};

void init_params(num::ParameterSet& params, const StlmConfig& cfg, const geom::GridConfig& grid);

// S x C3 tokens, token k is patch (k / R, k % R).
struct PatchTokens {
  num::Tensor tokens;
  std::size_t r = 0;
  std::size_t source_h = 0, source_w = 0;
};

// N x S x C3; row n is frame n (oldest first, current last).
struct SpatioTemporalGrid {
  num::Tensor values;
  std::vector<double> frame_ages;
  std::size_t frames() const { return values.dim(0); }
  std::size_t tokens() const { return values.dim(1); }
};

num::Tensor mask_fusion(const num::Tensor& feature, const num::Tensor& mask, const num::ParameterSet& params,
                        Variant variant = Variant::kFull);
FeatureMap mask_fusion(const FeatureMap& feature, const geom::BoxMask& mask, const num::ParameterSet& params,
                       Variant variant = Variant::kFull);

PatchTokens patchify(const FeatureMap& feature, const num::ParameterSet& params, std::size_t r,
                     Variant variant = Variant::kFull);

SpatioTemporalGrid build_grid(const std::vector<PatchTokens>& tokens, const std::vector<double>& ages);

// Deformable attention over the (time, space) token field. Offsets are in
// token units; samples outside the grid read zero.
SpatioTemporalGrid deformable_attend(const SpatioTemporalGrid& grid, const num::ParameterSet& params,
                                     const StlmConfig& cfg);

// [N, S, C] sinusoidal embedding: first half of the channels encodes the
// time row, second half the space column.
num::Tensor positional_embedding(std::size_t rows, std::size_t cols, std::size_t channels);

// U = Conv2D(cat[upsample(lift(current row)), F_t]).
FeatureMap fuse_current(const SpatioTemporalGrid& attended, const FeatureMap& current, const num::ParameterSet& params,
                        const StlmConfig& cfg);

// features oldest -> current; boxes are the N-1 past boxes in the grid's frame.
FeatureMap stlm_forward(const std::vector<FeatureMap>& features, const std::vector<geom::Box3D>& boxes,
                        const num::ParameterSet& params, const StlmConfig& cfg);

// Number of mask_fusion evaluations on this thread since the last reset.
std::size_t mask_fusion_count();
void reset_mask_fusion_count();

}  // namespace sttrack::stlm
