#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sodsynth/image.hpp"
#include "sodsynth/scribble.hpp"

namespace sodsynth {

/// One scribble-annotated training sample.
struct Sample {
    RgbImage image;
    ScribbleLabel label;
    std::string id;
};

/// Toy samples additionally carry an exact pixel-wise ground truth, which
/// makes all four evaluation metrics computable.
struct ToySample {
    Sample sample;
    BinaryMask ground_truth;
};

/// Generates n_samples images of 1-2 smooth random blobs with concave
/// outlines over a textured (sinusoidal + noise) background. The foreground
/// scribble is the skeleton of the blob mask; the background scribble is
/// the skeleton of a border band at least 5 px away from any blob.
/// Deterministic per (seed, index), so generation order does not matter.
std::vector<ToySample> generate_toy_dataset(int n_samples, int image_size, std::uint64_t seed);

struct ManifestEntry {
    std::string id;
    std::string image_path; // relative to the manifest file
    std::string label_path;
    std::string gt_path; // optional, empty when absent
    std::vector<std::string> synthetic_paths;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
};

/// Line-delimited text records; all referenced paths must exist or the
/// load fails listing every missing one.
DatasetManifest read_manifest(const std::string& path);
void write_manifest(const DatasetManifest& manifest, const std::string& path);

/// Materialized entry, paths resolved and PNGs loaded.
struct LoadedSample {
    Sample sample;
    BinaryMask ground_truth; // empty dims when the entry has no gt
    bool has_ground_truth = false;
    std::vector<std::string> synthetic_paths; // resolved to absolute paths
};

std::vector<LoadedSample> load_dataset(const std::string& manifest_path);

/// Writes images/, scribbles/, gt/ and manifest.txt under out_dir.
DatasetManifest write_toy_dataset(const std::vector<ToySample>& samples,
                                  const std::string& out_dir);

} // namespace sodsynth
