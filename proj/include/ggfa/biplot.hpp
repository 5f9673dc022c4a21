#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ggfa/canon.hpp"
#include "ggfa/types.hpp"

namespace ggfa {

struct BiplotSpec {
  int axis1 = 1;            // 1-based latent axis indices
  int axis2 = 2;
  std::string color_by;     // optional continuous column for the color ramp
  double arrow_scale = 0.0; // <= 0 selects the automatic scale
};

// Static biplot data: factor scores of every row on two latent axes, one
// arrow per feature (the dimensionless loading row scaled by c, restricted to
// the chosen axes), the limiting circle radius c, and axis labels carrying
// the contribution ratios.
struct Biplot {
  Eigen::MatrixXd scores;                  // n x 2
  std::vector<std::string> feature_names;  // p_x + q
  Eigen::MatrixXd arrows;                  // (p_x+q) x 2
  double circle_radius = 0.0;              // c
  double arrow_scale = 1.0;                // multiplier applied when drawing
  std::string x_label, y_label;            // e.g. "z1 (62.5%)"
  Eigen::VectorXd color;                   // per row; empty when unused
  std::string color_label;
};

// Requires a complete dataset matching the model schema and 1-based axes
// within 1..p_z. The automatic arrow scale is the 95th percentile of the
// score radii divided by c.
Biplot make_biplot(const CanonicalModel& model, const Schema& schema,
                   const Dataset& data, const BiplotSpec& spec);

void write_biplot_csv(const Biplot& b, const std::string& path);
void write_biplot_svg(const Biplot& b, const std::string& path);

}  // namespace ggfa
