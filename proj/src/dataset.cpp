#include "sodsynth/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "sodsynth/png_io.hpp"
#include "sodsynth/rng.hpp"

namespace fs = std::filesystem;

namespace sodsynth {

// -------------------------------------------------------------------------
// toy dataset
// -------------------------------------------------------------------------

namespace {

struct Blob {
    double center_r, center_c;
    double base_radius;
    // radial modulation r(theta) = base * (1 + sum_k amp[k] * sin(freq[k]*theta + phase[k]))
    std::vector<double> amp, phase;
    std::vector<int> freq;

    double radius_at(double theta) const {
        double m = 1.0;
        for (std::size_t k = 0; k < amp.size(); ++k)
            m += amp[k] * std::sin(freq[k] * theta + phase[k]);
        return base_radius * m;
    }

    bool contains(double r, double c) const {
        const double dr = r - center_r, dc = c - center_c;
        const double dist = std::sqrt(dr * dr + dc * dc);
        if (dist < 1e-9) return true;
        return dist <= radius_at(std::atan2(dr, dc));
    }
};

// Chebyshev distance transform to the nearest set pixel, BFS over 8-neighbors.
std::vector<int> chebyshev_distance(const BinaryMask& m) {
    const int h = m.height, w = m.width;
    std::vector<int> dist(static_cast<std::size_t>(h) * w, -1);
    std::vector<int> queue;
    queue.reserve(dist.size());
    for (int i = 0; i < h * w; ++i) {
        if (m.values[static_cast<std::size_t>(i)]) {
            dist[static_cast<std::size_t>(i)] = 0;
            queue.push_back(i);
        }
    }
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const int idx = queue[head];
        const int r = idx / w, c = idx % w;
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                const int nr = r + dr, nc = c + dc;
                if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                const std::size_t ni = static_cast<std::size_t>(nr) * w + nc;
                if (dist[ni] < 0) {
                    dist[ni] = dist[static_cast<std::size_t>(idx)] + 1;
                    queue.push_back(static_cast<int>(ni));
                }
            }
        }
    }
    return dist;
}

struct ToyParams {
    double min_area_frac = 0.05;
    double max_area_frac = 0.40;
    int border_band_lo = 1;   // band distance range from the image border
    int border_band_hi = 5;
    int blob_clearance = 5;   // minimum Chebyshev distance band-to-blob
    double texture_amp = 0.05;
    double noise_sigma = 0.025;
    double blob_noise_sigma = 0.02;
    double shading_amp = 0.06;
};

ToySample make_toy_sample(int index, int image_size, std::uint64_t seed) {
    const ToyParams params;
    auto rng = derive_rng(seed, rng_tag::kToyDataset, static_cast<std::uint64_t>(index));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const int n = image_size;
    for (int attempt = 0; attempt < 20; ++attempt) {
        // background palette: muted base color and a contrasting blob color
        double bg[3], fg[3];
        for (int ch = 0; ch < 3; ++ch) bg[ch] = 0.30 + 0.40 * uni(rng);
        // push the blob color away from the background by a bounded offset
        for (int ch = 0; ch < 3; ++ch) {
            double offset = (0.18 + 0.22 * uni(rng)) * (uni(rng) < 0.5 ? -1.0 : 1.0);
            fg[ch] = std::clamp(bg[ch] + offset, 0.05, 0.95);
        }

        const int blob_count = uni(rng) < 0.5 ? 1 : 2;
        std::vector<Blob> blobs;
        for (int b = 0; b < blob_count; ++b) {
            Blob blob;
            blob.base_radius = n * (blob_count == 1 ? 0.18 + 0.10 * uni(rng)
                                                    : 0.12 + 0.07 * uni(rng));
            const double margin = blob.base_radius * 1.5 + params.blob_clearance + 2;
            const double span = std::max(0.0, n - 2 * margin);
            blob.center_r = margin + uni(rng) * span;
            blob.center_c = margin + uni(rng) * span;
            // lobed outline: 2-4 harmonics, total modulation in [0.35, 0.5)
            // keeps the radius positive while carving clear concavities
            const int harmonics = 2 + static_cast<int>(uni(rng) * 3);
            const double budget = 0.35 + 0.15 * uni(rng);
            std::vector<double> weights(static_cast<std::size_t>(harmonics));
            double weight_sum = 0;
            for (auto& wgt : weights) {
                wgt = 0.3 + 0.7 * uni(rng);
                weight_sum += wgt;
            }
            for (int k = 0; k < harmonics; ++k) {
                blob.amp.push_back(budget * weights[static_cast<std::size_t>(k)] / weight_sum);
                blob.freq.push_back(2 + k);
                blob.phase.push_back(uni(rng) * 2 * M_PI);
            }
            blobs.push_back(blob);
        }

        BinaryMask gt(n, n);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                for (const auto& blob : blobs)
                    if (blob.contains(r + 0.5, c + 0.5)) {
                        gt.at(r, c) = 1;
                        break;
                    }

        const double area_frac = static_cast<double>(gt.count()) / (n * n);
        if (area_frac < params.min_area_frac || area_frac > params.max_area_frac) continue;

        // image: sinusoidal texture + noise over the background, shaded noisy blobs
        RgbImage image(n, n);
        const double fr = 0.5 + 2.5 * uni(rng), fc = 0.5 + 2.5 * uni(rng);
        const double tex_phase = uni(rng) * 2 * M_PI;
        const double shade_dir = uni(rng) * 2 * M_PI;
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                const double tex = params.texture_amp *
                                   std::sin(2 * M_PI * (fr * r + fc * c) / n + tex_phase);
                const bool inside = gt.at(r, c) != 0;
                const double shade =
                    inside ? params.shading_amp *
                                 (std::cos(shade_dir) * (r - n / 2.0) +
                                  std::sin(shade_dir) * (c - n / 2.0)) /
                                 n
                           : 0.0;
                for (int ch = 0; ch < 3; ++ch) {
                    double v = inside ? fg[ch] + shade + params.blob_noise_sigma * gauss(rng)
                                      : bg[ch] + tex + params.noise_sigma * gauss(rng);
                    image.at(r, c, ch) = std::clamp(v, 0.0, 1.0);
                }
            }
        }

        BinaryMask fg_scribble = skeletonize(gt);
        if (fg_scribble.empty_mask()) continue;

        // border band >= blob_clearance px from any blob pixel
        const auto dist_to_blob = chebyshev_distance(gt);
        BinaryMask band(n, n);
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                const int border = std::min({r, c, n - 1 - r, n - 1 - c});
                if (border < params.border_band_lo || border > params.border_band_hi) continue;
                if (dist_to_blob[static_cast<std::size_t>(r) * n + c] < params.blob_clearance)
                    continue;
                band.at(r, c) = 1;
            }
        }
        BinaryMask bg_scribble = skeletonize(band);
        if (bg_scribble.empty_mask()) continue;

        ScribbleLabel label(n, n);
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                if (fg_scribble.at(r, c))
                    label.at(r, c) = PixelState::Foreground;
                else if (bg_scribble.at(r, c))
                    label.at(r, c) = PixelState::Background;
            }
        }

        char id[32];
        std::snprintf(id, sizeof(id), "toy_%05d", index);
        return ToySample{Sample{std::move(image), std::move(label), id}, std::move(gt)};
    }
    throw GenerationError("toy dataset: no valid geometry for sample " + std::to_string(index) +
                          " after 20 attempts");
}

} // namespace

std::vector<ToySample> generate_toy_dataset(int n_samples, int image_size, std::uint64_t seed) {
    if (n_samples < 1) throw ParameterError("generate_toy_dataset: n_samples must be >= 1");
    if (image_size < 32) throw ParameterError("generate_toy_dataset: image_size must be >= 32");
    std::vector<ToySample> out;
    out.reserve(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i) out.push_back(make_toy_sample(i, image_size, seed));
    return out;
}

// -------------------------------------------------------------------------
// manifest
// -------------------------------------------------------------------------

namespace {

constexpr const char* kManifestHeader = "# sodsynth manifest v1";

std::string join_paths(const std::vector<std::string>& paths) {
    std::string s;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        if (i) s += ",";
        s += paths[i];
    }
    return s;
}

} // namespace

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open manifest '" + path + "' for writing");
    out << kManifestHeader << "\n";
    for (const auto& e : manifest.entries) {
        out << "sample id=" << e.id << " image=" << e.image_path << " label=" << e.label_path;
        if (!e.gt_path.empty()) out << " gt=" << e.gt_path;
        if (!e.synthetic_paths.empty()) out << " synthetic=" << join_paths(e.synthetic_paths);
        out << "\n";
    }
    if (!out) throw IoError("failed writing manifest '" + path + "'");
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path + "'");
    const fs::path base = fs::path(path).parent_path();

    DatasetManifest manifest;
    std::vector<std::string> missing;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream tokens(line);
        std::string head;
        tokens >> head;
        if (head != "sample")
            throw FormatError("manifest '" + path + "' line " + std::to_string(line_no) +
                              ": expected 'sample', got '" + head + "'");
        ManifestEntry entry;
        std::string token;
        while (tokens >> token) {
            const auto eq = token.find('=');
            if (eq == std::string::npos)
                throw FormatError("manifest '" + path + "' line " + std::to_string(line_no) +
                                  ": malformed token '" + token + "'");
            const std::string key = token.substr(0, eq);
            const std::string value = token.substr(eq + 1);
            if (key == "id") {
                entry.id = value;
            } else if (key == "image") {
                entry.image_path = value;
            } else if (key == "label") {
                entry.label_path = value;
            } else if (key == "gt") {
                entry.gt_path = value;
            } else if (key == "synthetic") {
                std::string item;
                std::istringstream list(value);
                while (std::getline(list, item, ','))
                    if (!item.empty()) entry.synthetic_paths.push_back(item);
            } else {
                throw FormatError("manifest '" + path + "' line " + std::to_string(line_no) +
                                  ": unknown key '" + key + "'");
            }
        }
        if (entry.id.empty() || entry.image_path.empty() || entry.label_path.empty())
            throw FormatError("manifest '" + path + "' line " + std::to_string(line_no) +
                              ": entry needs id, image and label");

        auto check = [&](const std::string& rel) {
            if (!rel.empty() && !fs::exists(base / rel)) missing.push_back(rel);
        };
        check(entry.image_path);
        check(entry.label_path);
        check(entry.gt_path);
        for (const auto& p : entry.synthetic_paths) check(p);
        manifest.entries.push_back(std::move(entry));
    }
    if (!missing.empty()) {
        std::string msg = "manifest '" + path + "' references missing files:";
        for (const auto& m : missing) msg += " " + m;
        throw IoError(msg);
    }
    return manifest;
}

std::vector<LoadedSample> load_dataset(const std::string& manifest_path) {
    const DatasetManifest manifest = read_manifest(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    std::vector<LoadedSample> out;
    out.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        LoadedSample s;
        s.sample.id = e.id;
        s.sample.image = load_png_rgb((base / e.image_path).string());
        s.sample.label = load_scribble((base / e.label_path).string());
        if (s.sample.label.height != s.sample.image.height ||
            s.sample.label.width != s.sample.image.width)
            throw FormatError("sample '" + e.id + "': image and label dimensions differ");
        if (!e.gt_path.empty()) {
            GrayImage gt = load_png_gray((base / e.gt_path).string());
            s.ground_truth = BinaryMask(gt.height, gt.width);
            for (std::size_t i = 0; i < gt.values.size(); ++i)
                s.ground_truth.values[i] = gt.values[i] > 0.5;
            s.has_ground_truth = true;
        }
        for (const auto& p : e.synthetic_paths)
            s.synthetic_paths.push_back((base / p).string());
        out.push_back(std::move(s));
    }
    return out;
}

DatasetManifest write_toy_dataset(const std::vector<ToySample>& samples,
                                  const std::string& out_dir) {
    const fs::path base(out_dir);
    fs::create_directories(base / "images");
    fs::create_directories(base / "scribbles");
    fs::create_directories(base / "gt");

    DatasetManifest manifest;
    for (const auto& toy : samples) {
        const std::string name = toy.sample.id + ".png";
        save_png(toy.sample.image, (base / "images" / name).string());
        save_scribble(toy.sample.label, (base / "scribbles" / name).string());
        save_png(toy.ground_truth, (base / "gt" / name).string());
        ManifestEntry entry;
        entry.id = toy.sample.id;
        entry.image_path = "images/" + name;
        entry.label_path = "scribbles/" + name;
        entry.gt_path = "gt/" + name;
        manifest.entries.push_back(std::move(entry));
    }
    write_manifest(manifest, (base / "manifest.txt").string());
    return manifest;
}

} // namespace sodsynth
