/* Copyright 2026 The LGUNet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <string>

namespace lgunet {

struct FrameSize {
  int height = 0;
  int width = 0;

  bool operator==(const FrameSize&) const = default;
  std::string str() const { return std::to_string(height) + "x" + std::to_string(width); }
};

// One cell of the uniform patch grid over the cropped full-resolution frame.
struct PatchWindow {
  int row = 0;
  int col = 0;
  int top = 0;
  int left = 0;
  int size = 0;
  FrameSize frame;

  bool operator==(const PatchWindow&) const = default;
};

// Continuous footprint of a window in the global (downsampled) frame, in edge
// coordinates: pixel k covers [k, k + 1).
struct GlobalCropRect {
  double top = 0.0;
  double left = 0.0;
  double bottom = 0.0;
  double right = 0.0;

  double height() const { return bottom - top; }
  double width() const { return right - left; }
};

}  // namespace lgunet
