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

#include "spt/render.hpp"

#include <algorithm>
#include <cstdio>

namespace spt {

namespace {

constexpr int kCaptionBand = 32;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  // Avoid "-0.000".
  if (std::string_view(buf) == "-0.000") return "0.000";
  return buf;
}

Box reflect(const Box& b) { return {1.0 - b.center_x, b.center_y, b.half_w, b.half_h}; }

Grid reflect(const Grid& g) { return g.rowwise().reverse(); }

class Panel {
 public:
  Panel(std::string& out, const RenderStyle& style, double offset_x)
      : out_(out), style_(style), offset_(offset_x), size_(style.canvas) {}

  void frame() {
    out_ += "<rect x=\"" + num(offset_) + "\" y=\"0.000\" width=\"" + num(size_) +
            "\" height=\"" + num(size_) + "\" fill=\"#ffffff\" stroke=\"#808080\"/>\n";
  }

  void grid(const Grid& g) {
    const double cw = size_ / double(g.cols());
    const double ch = size_ / double(g.rows());
    out_ += "<g fill=\"" + style_.object_color + "\">\n";
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      for (Eigen::Index j = 0; j < g.cols(); ++j) {
        const double a = std::clamp(g(i, j), 0.0, 1.0);
        out_ += "<rect x=\"" + num(offset_ + double(j) * cw) + "\" y=\"" + num(double(i) * ch) +
                "\" width=\"" + num(cw) + "\" height=\"" + num(ch) + "\" fill-opacity=\"" +
                num(a) + "\"/>\n";
      }
    }
    out_ += "</g>\n";
  }

  void box(const Box& b, const std::string& color) {
    const double x0 = std::clamp(b.left(), 0.0, 1.0);
    const double x1 = std::clamp(b.right(), 0.0, 1.0);
    const double y0 = std::clamp(b.top(), 0.0, 1.0);
    const double y1 = std::clamp(b.bottom(), 0.0, 1.0);
    if (x1 < x0 || y1 < y0) return;
    out_ += "<rect x=\"" + num(offset_ + x0 * size_) + "\" y=\"" + num(y0 * size_) +
            "\" width=\"" + num((x1 - x0) * size_) + "\" height=\"" + num((y1 - y0) * size_) +
            "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" +
            num(style_.stroke_width) + "\"/>\n";
  }

 private:
  std::string& out_;
  const RenderStyle& style_;
  double offset_;
  double size_;
};

void draw(Panel& panel, const Scene& scene, const RenderStyle& style, bool reflected) {
  panel.frame();
  if (scene.heatmap())
    panel.grid(reflected ? reflect(*scene.heatmap()) : *scene.heatmap());
  const Box subject = scene.query().subject_box;
  panel.box(reflected ? reflect(subject) : subject, style.subject_color);
  if (scene.box()) {
    const Box b = scene.box()->box();
    panel.box(reflected ? reflect(b) : b, style.object_color);
  }
}

}  // namespace

Scene::Scene(Query query, std::optional<RegPrediction> box, std::optional<Grid> heatmap)
    : query_(std::move(query)), box_(std::move(box)), heatmap_(std::move(heatmap)) {
  if (box_.has_value() == heatmap_.has_value())
    throw Error("a scene needs exactly one of a box prediction and a heatmap");
  if (heatmap_ && heatmap_->size() == 0) throw Error("empty heatmap");
}

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string render_scene(const Scene& scene, const RenderStyle& style) {
  if (style.canvas <= 0) throw Error("canvas size must be positive");
  const int panels = style.side_by_side_reflection ? 2 : 1;
  const int width = style.canvas * panels;
  const int height = style.canvas + kCaptionBand;
  const Query& q = scene.query();
  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
         std::to_string(width) + "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " +
         std::to_string(width) + " " + std::to_string(height) + "\">\n";
  if (!style.metadata.empty()) out += "<metadata>" + xml_escape(style.metadata) + "</metadata>\n";
  for (int p = 0; p < panels; ++p) {
    Panel panel(out, style, double(p * style.canvas));
    draw(panel, scene, style, p == 1);
  }
  out += "<text x=\"" + num(double(width) / 2.0) + "\" y=\"" +
         num(double(style.canvas) + kCaptionBand * 0.7) +
         "\" font-family=\"sans-serif\" font-size=\"18\" text-anchor=\"middle\">" +
         xml_escape("(" + q.subject_word + ", " + q.relation_word + ", " + q.object_word + ")") +
         "</text>\n";
  out += "</svg>\n";
  return out;
}

}  // namespace spt
