#include "xpolicy/stub_encoders.hpp"

#include <cmath>

#include "xpolicy/rng.hpp"

namespace xpolicy {

StubVisionEncoder::StubVisionEncoder(uint64_t seed, long patch_grid, long feature_dim, long image_size)
    : patch_grid_(patch_grid), feature_dim_(feature_dim), image_size_(image_size) {
    if (patch_grid < 1 || feature_dim < 1 || image_size < patch_grid || image_size % patch_grid != 0)
        throw layout_error("vision stub: image size " + std::to_string(image_size) + " incompatible with patch grid " +
                           std::to_string(patch_grid));
    const long ps = image_size / patch_grid;
    patch_dim_ = 3 * ps * ps;
    Rng rng(seed, "vision-stub");
    const double scale = 1.0 / std::sqrt(static_cast<double>(patch_dim_));
    w_.resize(static_cast<size_t>(feature_dim_ * patch_dim_));
    for (auto& v : w_) v = rng.normal() * scale;
}

std::vector<double> StubVisionEncoder::encode(const Image& img) const {
    if (img.size != image_size_)
        throw layout_error("vision stub: got image size " + std::to_string(img.size) + ", expected " +
                           std::to_string(image_size_));
    std::vector<double> out(static_cast<size_t>(patch_count() * feature_dim_));
    long row = 0;
    for (long py = 0; py < patch_grid_; ++py)
        for (long px = 0; px < patch_grid_; ++px, ++row) {
            const std::vector<double> patch = flatten_patch(img, patch_grid_, py, px);
            for (long f = 0; f < feature_dim_; ++f) {
                double acc = 0;
                const double* wf = w_.data() + f * patch_dim_;
                for (long i = 0; i < patch_dim_; ++i) acc += wf[i] * (patch[static_cast<size_t>(i)] - 0.5);
                out[static_cast<size_t>(row * feature_dim_ + f)] = acc;
            }
        }
    return out;
}

StubLanguageEncoder::StubLanguageEncoder(uint64_t seed, long vocab_size, long feature_dim)
    : vocab_size_(vocab_size), feature_dim_(feature_dim) {
    if (vocab_size < 1 || feature_dim < 1) throw layout_error("language stub: bad dimensions");
    Rng rng(seed, "language-stub");
    table_.resize(static_cast<size_t>(vocab_size_ * feature_dim_));
    for (auto& v : table_) v = rng.normal();
}

std::vector<double> StubLanguageEncoder::encode(const std::vector<long>& ids) const {
    std::vector<double> out(ids.size() * static_cast<size_t>(feature_dim_));
    std::vector<double> prefix(static_cast<size_t>(feature_dim_), 0.0);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= vocab_size_)
            throw layout_error("language stub: token id " + std::to_string(ids[i]) + " outside vocabulary");
        const double* e = table_.data() + ids[i] * feature_dim_;
        for (long f = 0; f < feature_dim_; ++f) {
            const double ctx = i == 0 ? 0.0 : prefix[static_cast<size_t>(f)] / static_cast<double>(i);
            out[i * static_cast<size_t>(feature_dim_) + static_cast<size_t>(f)] = e[f] + 0.5 * ctx;
            prefix[static_cast<size_t>(f)] += e[f];
        }
    }
    return out;
}

}  // namespace xpolicy
