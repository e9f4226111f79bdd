#pragma once

#include <span>
#include <vector>

namespace ovad {

/// Axis-aligned box in image pixel coordinates.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }

  /// Finite coordinates with positive extent on both axes.
  bool valid() const;

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Side length of the network input crop. Recorded as metadata only.
inline constexpr int kCropSize = 224;

/// Intersection over union; 0 for disjoint boxes.
double iou(const BBox& a, const BBox& b);

/// Smallest box containing both arguments.
BBox box_union(const BBox& a, const BBox& b);

/// Clamp a box to [0,width]x[0,height]. The result may be degenerate.
BBox clamp_to_image(const BBox& box, double image_width, double image_height);

/// Repeatedly replaces any pair with IoU > tau_merge by its tight union until
/// no such pair remains. Output is sorted by (x1, y1, x2, y2).
std::vector<BBox> merge_overlapping(std::span<const BBox> boxes, double tau_merge = 0.0);

/// Expands the short side symmetrically about the box center to match the
/// long side, then clamps to the image.
BBox squarify(const BBox& box, double image_width, double image_height);

/// Where a detection would be cropped from and how it maps onto the
/// kCropSize x kCropSize network input.
struct CropGeometry {
  BBox region;
  double scale_x = 1.0;
  double scale_y = 1.0;
};

CropGeometry input_crop(const BBox& box, double image_width, double image_height,
                        int crop_size = kCropSize);

}  // namespace ovad
