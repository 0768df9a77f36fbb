// Copyright 2026 The spatial-templates Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// SVG rendering of a single prediction: the given subject box plus either the
// predicted object box or the predicted heatmap.

#ifndef SPT_RENDER_HPP
#define SPT_RENDER_HPP

#include <optional>
#include <string>

#include "spt/templates.hpp"

namespace spt {

struct RenderStyle {
  int canvas = 512;
  std::string subject_color = "#1f4fd8";
  std::string object_color = "#d62728";
  double stroke_width = 3.0;
  /// Draw the horizontal reflection next to the prediction.
  bool side_by_side_reflection = false;
  /// Emitted escaped inside <metadata> when non-empty.
  std::string metadata;
};

class Scene {
 public:
  /// Throws Error unless exactly one of `box` and `heatmap` is given.
  Scene(Query query, std::optional<RegPrediction> box, std::optional<Grid> heatmap);

  const Query& query() const { return query_; }
  const std::optional<RegPrediction>& box() const { return box_; }
  const std::optional<Grid>& heatmap() const { return heatmap_; }

 private:
  Query query_;
  std::optional<RegPrediction> box_;
  std::optional<Grid> heatmap_;
};

/// Standalone SVG 1.1 document. Identical scenes give identical bytes.
std::string render_scene(const Scene& scene, const RenderStyle& style = {});

std::string xml_escape(const std::string& text);

}  // namespace spt

#endif  // SPT_RENDER_HPP
