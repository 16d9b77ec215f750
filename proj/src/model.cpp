#include "sodsynth/model.hpp"

#include <cmath>
#include <random>

#include "sodsynth/rng.hpp"

namespace sodsynth {

using ad::Tensor;
using ad::Variable;

namespace {

constexpr int kChannels[] = {3, 16, 16, 16, 1};
constexpr int kLayers = 4;

Tensor init_kernel(int c_out, int c_in, std::mt19937_64& rng) {
    const double bound = std::sqrt(1.0 / (c_in * 3 * 3));
    std::uniform_real_distribution<double> uni(-bound, bound);
    Tensor k({c_out, c_in, 3, 3});
    for (std::size_t i = 0; i < k.numel(); ++i) k[i] = uni(rng);
    return k;
}

} // namespace

ToyModel::ToyModel() {
    for (int l = 0; l < kLayers; ++l)
        params_.emplace_back(Tensor({kChannels[l + 1], kChannels[l], 3, 3}), true);
}

ToyModel::ToyModel(std::uint64_t seed) {
    auto rng = derive_rng(seed, rng_tag::kModelInit);
    for (int l = 0; l < kLayers; ++l)
        params_.emplace_back(init_kernel(kChannels[l + 1], kChannels[l], rng), true);
}

Variable ToyModel::forward(const Variable& image) const {
    if (image.value().rank() != 3 || image.value().dim(0) != 3)
        throw DimensionError("ToyModel::forward: expected [3,H,W], got " +
                             image.value().shape_str());
    Variable x = image;
    for (int l = 0; l < kLayers; ++l) {
        x = ad::conv2d(x, params_[static_cast<std::size_t>(l)], 1, 1);
        if (l + 1 < kLayers) x = ad::relu(x);
    }
    const int h = x.value().dim(1), w = x.value().dim(2);
    return ad::sigmoid(ad::reshape(x, {h, w}));
}

GrayImage ToyModel::predict(const RgbImage& image) const {
    Variable out = forward(Variable(image_to_tensor(image)));
    GrayImage map(image.height, image.width);
    for (std::size_t i = 0; i < map.values.size(); ++i) map.values[i] = out.value()[i];
    return map;
}

ToyModel ToyModel::fork() const {
    ToyModel copy;
    copy.params_.clear();
    for (const auto& p : params_) copy.params_.emplace_back(p.value(), true);
    return copy;
}

Tensor ToyModel::image_to_tensor(const RgbImage& image) {
    Tensor t({3, image.height, image.width});
    for (int ch = 0; ch < 3; ++ch)
        for (int r = 0; r < image.height; ++r)
            for (int c = 0; c < image.width; ++c) t.at3(ch, r, c) = image.at(r, c, ch);
    return t;
}

std::uint64_t ToyModel::parameter_checksum() const {
    std::uint64_t hash = 1469598103934665603ULL;
    auto mix_bytes = [&](const void* data, std::size_t bytes) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < bytes; ++i) {
            hash ^= p[i];
            hash *= 1099511628211ULL;
        }
    };
    for (const auto& param : params_) {
        const Tensor& t = param.value();
        mix_bytes(t.data(), t.numel() * sizeof(double));
    }
    return hash;
}

} // namespace sodsynth
