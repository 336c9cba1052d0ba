// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "melssl/dsp.hpp"

#include <string>

namespace melssl::dsp {

/** Reads a mono PCM WAV file (16-bit integer or 32-bit float). */
WaveClip read_wav(const std::string& path);

/** Writes a mono 16-bit PCM WAV file; samples are clamped to [-1, 1]. */
void write_wav(const std::string& path, const WaveClip& clip);

}  // namespace melssl::dsp
