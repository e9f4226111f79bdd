#include "ovad/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace ovad {

bool BBox::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x1 < x2 && y1 < y2;
}

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

BBox box_union(const BBox& a, const BBox& b) {
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
          std::max(a.y2, b.y2)};
}

BBox clamp_to_image(const BBox& box, double image_width, double image_height) {
  return {std::clamp(box.x1, 0.0, image_width), std::clamp(box.y1, 0.0, image_height),
          std::clamp(box.x2, 0.0, image_width), std::clamp(box.y2, 0.0, image_height)};
}

namespace {

bool box_less(const BBox& a, const BBox& b) {
  return std::tie(a.x1, a.y1, a.x2, a.y2) < std::tie(b.x1, b.y1, b.x2, b.y2);
}

}  // namespace

std::vector<BBox> merge_overlapping(std::span<const BBox> boxes, double tau_merge) {
  std::vector<BBox> out(boxes.begin(), boxes.end());
  std::sort(out.begin(), out.end(), box_less);

  // Scan pairs in sorted order; restart after every merge so the union gets a
  // chance to absorb boxes it now overlaps.
  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t i = 0; i < out.size() && !merged; ++i) {
      for (std::size_t j = i + 1; j < out.size(); ++j) {
        if (iou(out[i], out[j]) > tau_merge) {
          out[i] = box_union(out[i], out[j]);
          out.erase(out.begin() + static_cast<std::ptrdiff_t>(j));
          merged = true;
          break;
        }
      }
    }
    if (merged) std::sort(out.begin(), out.end(), box_less);
  }
  return out;
}

BBox squarify(const BBox& box, double image_width, double image_height) {
  BBox out = box;
  const double w = box.width();
  const double h = box.height();
  if (h < w) {
    const double cy = box.center_y();
    out.y1 = cy - 0.5 * w;
    out.y2 = cy + 0.5 * w;
  } else if (w < h) {
    const double cx = box.center_x();
    out.x1 = cx - 0.5 * h;
    out.x2 = cx + 0.5 * h;
  }
  return clamp_to_image(out, image_width, image_height);
}

CropGeometry input_crop(const BBox& box, double image_width, double image_height,
                        int crop_size) {
  CropGeometry g;
  g.region = squarify(box, image_width, image_height);
  g.scale_x = crop_size / g.region.width();
  g.scale_y = crop_size / g.region.height();
  return g;
}

}  // namespace ovad
