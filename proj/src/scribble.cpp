#include "sodsynth/scribble.hpp"

#include <cmath>

#include "sodsynth/png_io.hpp"

namespace sodsynth {

ScribbleLabel flip(const ScribbleLabel& label, FlipMode mode) {
    const bool h = mode == FlipMode::Horizontal || mode == FlipMode::Both;
    const bool v = mode == FlipMode::Vertical || mode == FlipMode::Both;
    ScribbleLabel out(label.height, label.width);
    for (int r = 0; r < label.height; ++r) {
        const int sr = v ? label.height - 1 - r : r;
        for (int c = 0; c < label.width; ++c) {
            const int sc = h ? label.width - 1 - c : c;
            out.at(r, c) = label.at(sr, sc);
        }
    }
    return out;
}

ScribbleLabel rotate90(const ScribbleLabel& label, int quarter_turns) {
    if (label.height != label.width)
        throw UsageError("rotate90: only square labels are supported");
    int q = ((quarter_turns % 4) + 4) % 4;
    ScribbleLabel cur = label;
    const int n = label.height;
    for (int t = 0; t < q; ++t) {
        ScribbleLabel next(n, n);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) next.at(r, c) = cur.at(c, n - 1 - r);
        cur = next;
    }
    return cur;
}

ScribbleLabel load_scribble(const std::string& path) {
    GrayImage img = load_png_gray(path);
    ScribbleLabel label(img.height, img.width);
    for (std::size_t i = 0; i < img.values.size(); ++i) {
        const int v = static_cast<int>(std::lround(img.values[i] * 255.0));
        switch (v) {
            case 0: label.states[i] = PixelState::Unknown; break;
            case 128: label.states[i] = PixelState::Background; break;
            case 255: label.states[i] = PixelState::Foreground; break;
            default:
                throw FormatError("scribble PNG '" + path + "' contains invalid value " +
                                  std::to_string(v) + " (expected 0, 128 or 255)");
        }
    }
    return label;
}

void save_scribble(const ScribbleLabel& label, const std::string& path) {
    GrayImage img(label.height, label.width);
    for (std::size_t i = 0; i < label.states.size(); ++i) {
        switch (label.states[i]) {
            case PixelState::Unknown: img.values[i] = 0.0; break;
            case PixelState::Background: img.values[i] = 128.0 / 255.0; break;
            case PixelState::Foreground: img.values[i] = 1.0; break;
        }
    }
    save_png(img, path);
}

} // namespace sodsynth
