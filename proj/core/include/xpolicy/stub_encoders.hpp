#pragma once

#include <cstdint>
#include <vector>

#include "xpolicy/image.hpp"

namespace xpolicy {

/// Frozen stand-in for a pretrained patch-sequence vision encoder: a seeded
/// random linear map applied per patch, keeping the full patch sequence.
/// Outputs are plain data, so no gradient can ever reach this encoder.
class StubVisionEncoder {
public:
    StubVisionEncoder(uint64_t seed, long patch_grid, long feature_dim, long image_size);

    long patch_count() const { return patch_grid_ * patch_grid_; }
    long feature_dim() const { return feature_dim_; }
    long image_size() const { return image_size_; }

    /// patch_count() rows of feature_dim() values, row-major patch order.
    std::vector<double> encode(const Image& img) const;

private:
    long patch_grid_, feature_dim_, image_size_, patch_dim_;
    std::vector<double> w_;  // feature_dim x patch_dim
};

/// Frozen stand-in for a pretrained language encoder: seeded random token
/// embeddings plus one deterministic causal-mean mixing pass, so outputs are
/// contextualized (the same id embeds differently at different positions).
class StubLanguageEncoder {
public:
    StubLanguageEncoder(uint64_t seed, long vocab_size, long feature_dim);

    long vocab_size() const { return vocab_size_; }
    long feature_dim() const { return feature_dim_; }

    /// One row per token id.
    std::vector<double> encode(const std::vector<long>& ids) const;

private:
    long vocab_size_, feature_dim_;
    std::vector<double> table_;  // vocab x feature_dim
};

}  // namespace xpolicy
