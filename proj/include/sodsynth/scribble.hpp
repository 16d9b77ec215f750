#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sodsynth/image.hpp"

namespace sodsynth {

enum class PixelState : std::uint8_t { Unknown = 0, Foreground = 1, Background = 2 };

/// Per-pixel three-state scribble annotation. The labeled set J (everything
/// not Unknown) is exactly the support of the partial cross entropy loss.
struct ScribbleLabel {
    int height = 0;
    int width = 0;
    std::vector<PixelState> states;

    ScribbleLabel() = default;
    ScribbleLabel(int h, int w)
        : height(h), width(w), states(static_cast<std::size_t>(h) * w, PixelState::Unknown) {}

    PixelState& at(int r, int c) { return states[static_cast<std::size_t>(r) * width + c]; }
    PixelState at(int r, int c) const { return states[static_cast<std::size_t>(r) * width + c]; }

    std::size_t labeled_count() const {
        std::size_t n = 0;
        for (auto s : states) n += s != PixelState::Unknown;
        return n;
    }
    std::size_t foreground_count() const {
        std::size_t n = 0;
        for (auto s : states) n += s == PixelState::Foreground;
        return n;
    }
    std::size_t background_count() const {
        std::size_t n = 0;
        for (auto s : states) n += s == PixelState::Background;
        return n;
    }

    BinaryMask mask_of(PixelState state) const {
        BinaryMask m(height, width);
        for (std::size_t i = 0; i < states.size(); ++i) m.values[i] = states[i] == state;
        return m;
    }
    BinaryMask foreground_mask() const { return mask_of(PixelState::Foreground); }
    BinaryMask background_mask() const { return mask_of(PixelState::Background); }
    BinaryMask labeled_mask() const {
        BinaryMask m(height, width);
        for (std::size_t i = 0; i < states.size(); ++i)
            m.values[i] = states[i] != PixelState::Unknown;
        return m;
    }
};

ScribbleLabel flip(const ScribbleLabel& label, FlipMode mode);
ScribbleLabel rotate90(const ScribbleLabel& label, int quarter_turns);

/// Reads the scribble PNG encoding: 0 -> Unknown, 128 -> Background,
/// 255 -> Foreground. Any other pixel value is a format error.
ScribbleLabel load_scribble(const std::string& path);

/// Writes the same encoding.
void save_scribble(const ScribbleLabel& label, const std::string& path);

} // namespace sodsynth
