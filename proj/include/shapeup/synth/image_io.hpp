#pragma once

#include <array>
#include <string>

#include "shapeup/synth/render.hpp"

namespace shapeup::synth {

// 8-bit PNG export for visual inspection (values clamped to [0,1]).
void save_png_gray(const Image& img, const std::string& path);
void save_png_rgb(const std::array<Image, 3>& rgb, const std::string& path);

}  // namespace shapeup::synth
