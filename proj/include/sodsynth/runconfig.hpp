#pragma once

#include <string>

#include "sodsynth/losses.hpp"
#include "sodsynth/synthgen.hpp"
#include "sodsynth/trainer.hpp"

namespace sodsynth {

/// Fully resolved experiment configuration: plain-text file, command-line
/// overrides, and a deterministic echo that parses back to the same values.
struct RunConfig {
    SynthConfig synth;
    LossConfig loss;
    TrainConfig train;

    void validate() const;
};

/// Parses `key = value` lines ('#' starts a comment). Unknown keys and bad
/// values fail with the offending line number.
RunConfig parse_config_file(const std::string& path);

/// Applies a single "section.key=value" override.
void apply_override(RunConfig& config, const std::string& assignment);

/// Canonical text form; parse_config_text(echo_config(c)) == c.
std::string echo_config(const RunConfig& config);

RunConfig parse_config_text(const std::string& text, const std::string& origin = "<string>");

} // namespace sodsynth
