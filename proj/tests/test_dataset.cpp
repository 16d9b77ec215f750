#include <doctest.h>

#include <filesystem>
#include <cmath>
#include <fstream>

#include "sodsynth/dataset.hpp"
#include "sodsynth/png_io.hpp"

using namespace sodsynth;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& leaf) {
    auto dir = fs::temp_directory_path() / "sodsynth_dataset_tests" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("load_scribble decodes the three-state encoding") {
    auto dir = temp_dir("scribble");

    GrayImage img(6, 8, 0.0);
    save_png(img, (dir / "all_zero.png").string());
    ScribbleLabel all_unknown = load_scribble((dir / "all_zero.png").string());
    CHECK(all_unknown.labeled_count() == 0);

    img.at(3, 4) = 128.0 / 255.0;
    img.at(1, 2) = 1.0;
    save_png(img, (dir / "mixed.png").string());
    ScribbleLabel mixed = load_scribble((dir / "mixed.png").string());
    CHECK(mixed.at(3, 4) == PixelState::Background);
    CHECK(mixed.at(1, 2) == PixelState::Foreground);
    CHECK(mixed.labeled_count() == 2);

    img.at(0, 0) = 17.0 / 255.0;
    save_png(img, (dir / "bad.png").string());
    CHECK_THROWS_WITH_AS(load_scribble((dir / "bad.png").string()),
                         doctest::Contains("17"), FormatError);
}

TEST_CASE("scribble save/load round trip") {
    auto dir = temp_dir("scribble_rt");
    ScribbleLabel label(5, 5);
    label.at(2, 2) = PixelState::Foreground;
    label.at(0, 4) = PixelState::Background;
    save_scribble(label, (dir / "label.png").string());
    ScribbleLabel back = load_scribble((dir / "label.png").string());
    CHECK(back.states == label.states);
}

TEST_CASE("toy dataset is deterministic per seed") {
    auto a = generate_toy_dataset(3, 64, 42);
    auto b = generate_toy_dataset(3, 64, 42);
    auto c = generate_toy_dataset(3, 64, 43);
    REQUIRE(a.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(a[i].sample.image.values == b[i].sample.image.values);
        CHECK(a[i].sample.label.states == b[i].sample.label.states);
        CHECK(a[i].ground_truth.values == b[i].ground_truth.values);
    }
    // different seed, different images
    CHECK(a[0].sample.image.values != c[0].sample.image.values);
}

TEST_CASE("toy dataset scribble geometry") {
    auto samples = generate_toy_dataset(25, 64, 7);
    for (const auto& toy : samples) {
        const auto& label = toy.sample.label;
        const auto& gt = toy.ground_truth;
        REQUIRE(label.foreground_count() > 0);
        REQUIRE(label.background_count() > 0);
        for (int r = 0; r < 64; ++r) {
            for (int c = 0; c < 64; ++c) {
                if (label.at(r, c) == PixelState::Foreground) CHECK(gt.at(r, c) == 1);
                if (label.at(r, c) == PixelState::Background) CHECK(gt.at(r, c) == 0);
            }
        }
    }
}

TEST_CASE("toy dataset blob area fraction stays in [5%, 40%]") {
    auto samples = generate_toy_dataset(300, 64, 20260101);
    for (const auto& toy : samples) {
        const double frac = static_cast<double>(toy.ground_truth.count()) / (64.0 * 64.0);
        CHECK(frac >= 0.05);
        CHECK(frac <= 0.40);
    }
}

TEST_CASE("toy dataset parameter validation") {
    CHECK_THROWS_AS(generate_toy_dataset(0, 64, 1), ParameterError);
    CHECK_THROWS_AS(generate_toy_dataset(1, 8, 1), ParameterError);
}

TEST_CASE("manifest round trip") {
    auto dir = temp_dir("manifest");
    auto samples = generate_toy_dataset(4, 64, 99);
    DatasetManifest written = write_toy_dataset(samples, dir.string());
    DatasetManifest read = read_manifest((dir / "manifest.txt").string());
    REQUIRE(read.entries.size() == written.entries.size());
    for (std::size_t i = 0; i < read.entries.size(); ++i) {
        CHECK(read.entries[i].id == written.entries[i].id);
        CHECK(read.entries[i].image_path == written.entries[i].image_path);
        CHECK(read.entries[i].label_path == written.entries[i].label_path);
        CHECK(read.entries[i].gt_path == written.entries[i].gt_path);
    }

    // write -> read -> write produces identical bytes
    write_manifest(read, (dir / "again.txt").string());
    std::ifstream f1(dir / "manifest.txt"), f2(dir / "again.txt");
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
}

TEST_CASE("manifest referencing an absent file fails with the path listed") {
    auto dir = temp_dir("manifest_missing");
    std::ofstream out(dir / "manifest.txt");
    out << "# sodsynth manifest v1\n";
    out << "sample id=x image=images/gone.png label=scribbles/gone.png\n";
    out.close();
    CHECK_THROWS_WITH_AS(read_manifest((dir / "manifest.txt").string()),
                         doctest::Contains("images/gone.png"), IoError);
}

TEST_CASE("empty manifest loads as an empty dataset") {
    auto dir = temp_dir("manifest_empty");
    std::ofstream out(dir / "manifest.txt");
    out << "# sodsynth manifest v1\n";
    out.close();
    CHECK(read_manifest((dir / "manifest.txt").string()).entries.empty());
    CHECK(load_dataset((dir / "manifest.txt").string()).empty());
}

TEST_CASE("load_dataset restores images, labels and ground truth") {
    auto dir = temp_dir("load_dataset");
    auto samples = generate_toy_dataset(2, 64, 5);
    write_toy_dataset(samples, dir.string());
    auto loaded = load_dataset((dir / "manifest.txt").string());
    REQUIRE(loaded.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(loaded[i].sample.id == samples[i].sample.id);
        CHECK(loaded[i].has_ground_truth);
        CHECK(loaded[i].ground_truth.values == samples[i].ground_truth.values);
        CHECK(loaded[i].sample.label.states == samples[i].sample.label.states);
        // PNG quantization: loaded image matches to within half a step
        double worst = 0;
        for (std::size_t j = 0; j < loaded[i].sample.image.values.size(); ++j)
            worst = std::max(worst, std::fabs(loaded[i].sample.image.values[j] -
                                              samples[i].sample.image.values[j]));
        CHECK(worst <= 0.5 / 255.0 + 1e-12);
    }
}
