#include "ggfa/biplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "ggfa/core.hpp"

namespace ggfa {

namespace {

std::string pct_label(int axis, double ratio) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "z%d (%.1f%%)", axis, 100.0 * ratio);
  return buf;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

Biplot make_biplot(const CanonicalModel& model, const Schema& schema,
                   const Dataset& data, const BiplotSpec& spec) {
  const ModelParams& params = model.params;
  const int p_z = params.p_z();
  if (spec.axis1 < 1 || spec.axis1 > p_z || spec.axis2 < 1 || spec.axis2 > p_z ||
      spec.axis1 == spec.axis2)
    throw UsageError("biplot axes must be distinct and within 1..p_z");
  data.validate();
  if (data.schema.p_x() != params.p_x() || data.schema.q() != params.q())
    throw DataError("dataset does not match model dimensions");
  if (!data.complete())
    throw DataError("biplot scores require complete rows");

  const int a1 = spec.axis1 - 1, a2 = spec.axis2 - 1;
  Biplot b;

  Evaluator ev(params);
  b.scores.resize(data.n(), 2);
  for (int i = 0; i < data.n(); ++i) {
    const Row& row = data.rows[static_cast<size_t>(i)];
    PosteriorResult post = ev.posterior(row.x, BitState::from_bits(row.y));
    b.scores(i, 0) = post.m(a1);
    b.scores(i, 1) = post.m(a2);
  }

  for (const auto& name : schema.continuous_names()) b.feature_names.push_back(name);
  for (const auto& name : schema.binary_names()) b.feature_names.push_back(name);
  const Eigen::MatrixXd M = params.M();
  b.arrows.resize(M.rows(), 2);
  b.arrows.col(0) = M.col(a1);
  b.arrows.col(1) = M.col(a2);
  b.circle_radius = params.c;

  b.x_label = pct_label(spec.axis1, model.P(a1));
  b.y_label = pct_label(spec.axis2, model.P(a2));

  if (!spec.color_by.empty()) {
    const auto cont_names = schema.continuous_names();
    int idx = -1;
    for (size_t j = 0; j < cont_names.size(); ++j)
      if (cont_names[j] == spec.color_by) idx = static_cast<int>(j);
    if (idx < 0) throw UsageError("--color-by must name a continuous column");
    b.color.resize(data.n());
    for (int i = 0; i < data.n(); ++i) b.color(i) = data.rows[static_cast<size_t>(i)].x(idx);
    b.color_label = spec.color_by;
  }

  if (spec.arrow_scale > 0.0) {
    b.arrow_scale = spec.arrow_scale;
  } else {
    // Auto scale: 95th percentile of score radii over the circle radius.
    std::vector<double> radii(static_cast<size_t>(data.n()));
    for (int i = 0; i < data.n(); ++i) radii[static_cast<size_t>(i)] = b.scores.row(i).norm();
    std::sort(radii.begin(), radii.end());
    const double p95 = radii[static_cast<size_t>(std::min<double>(
        static_cast<double>(radii.size()) - 1.0, std::floor(0.95 * radii.size())))];
    b.arrow_scale = (params.c > 0.0 && p95 > 0.0) ? p95 / params.c : 1.0;
  }
  return b;
}

void write_biplot_csv(const Biplot& b, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out << "record,name,v1,v2,extra\n";
  out << "axis,x," << b.x_label << ",,\n";
  out << "axis,y," << b.y_label << ",,\n";
  out << "circle,," << fmt(b.circle_radius) << ",,\n";
  out << "arrow_scale,," << fmt(b.arrow_scale) << ",,\n";
  for (int j = 0; j < b.arrows.rows(); ++j)
    out << "arrow," << b.feature_names[static_cast<size_t>(j)] << ","
        << fmt(b.arrows(j, 0)) << "," << fmt(b.arrows(j, 1)) << ",\n";
  for (int i = 0; i < b.scores.rows(); ++i) {
    out << "score," << (i + 1) << "," << fmt(b.scores(i, 0)) << ","
        << fmt(b.scores(i, 1)) << ",";
    if (b.color.size() > 0) out << fmt(b.color(i));
    out << "\n";
  }
}

namespace {

struct Mapper {
  double xmin, xmax, ymin, ymax;
  double size, margin;
  double sx(double x) const {
    return margin + (x - xmin) / (xmax - xmin) * (size - 2 * margin);
  }
  double sy(double y) const {
    return size - margin - (y - ymin) / (ymax - ymin) * (size - 2 * margin);
  }
};

std::string ramp_color(double t) {
  // blue (0) to red (1)
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(40 + 215 * t));
  const int g = static_cast<int>(std::lround(60 + 40 * (1 - std::abs(2 * t - 1))));
  const int bl = static_cast<int>(std::lround(40 + 215 * (1.0 - t)));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, bl);
  return buf;
}

}  // namespace

void write_biplot_svg(const Biplot& b, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);

  const double size = 640.0, margin = 60.0;
  const double s = b.arrow_scale;
  double lim = 1e-9;
  for (int i = 0; i < b.scores.rows(); ++i)
    lim = std::max({lim, std::abs(b.scores(i, 0)), std::abs(b.scores(i, 1))});
  lim = std::max(lim, s * b.circle_radius);
  lim *= 1.08;
  Mapper map{-lim, lim, -lim, lim, size, margin};

  double cmin = 0.0, cmax = 1.0;
  if (b.color.size() > 0) {
    cmin = b.color.minCoeff();
    cmax = b.color.maxCoeff();
    if (cmax <= cmin) cmax = cmin + 1.0;
  }

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size
      << "\" height=\"" << size << "\" viewBox=\"0 0 " << size << " " << size
      << "\">\n";
  out << "<rect width=\"" << size << "\" height=\"" << size << "\" fill=\"white\"/>\n";

  // axes through the origin
  out << "<line x1=\"" << fmt(map.sx(-lim)) << "\" y1=\"" << fmt(map.sy(0))
      << "\" x2=\"" << fmt(map.sx(lim)) << "\" y2=\"" << fmt(map.sy(0))
      << "\" stroke=\"#cccccc\"/>\n";
  out << "<line x1=\"" << fmt(map.sx(0)) << "\" y1=\"" << fmt(map.sy(-lim))
      << "\" x2=\"" << fmt(map.sx(0)) << "\" y2=\"" << fmt(map.sy(lim))
      << "\" stroke=\"#cccccc\"/>\n";

  // dashed circle: the maximum possible arrow length (radius c, scaled)
  out << "<circle cx=\"" << fmt(map.sx(0)) << "\" cy=\"" << fmt(map.sy(0))
      << "\" r=\"" << fmt(s * b.circle_radius / (2 * lim) * (size - 2 * margin))
      << "\" fill=\"none\" stroke=\"#888888\" stroke-dasharray=\"6,4\"/>\n";

  // scores
  for (int i = 0; i < b.scores.rows(); ++i) {
    std::string fill = "#4682b4";
    if (b.color.size() > 0)
      fill = ramp_color((b.color(i) - cmin) / (cmax - cmin));
    out << "<circle cx=\"" << fmt(map.sx(b.scores(i, 0))) << "\" cy=\""
        << fmt(map.sy(b.scores(i, 1))) << "\" r=\"2.4\" fill=\"" << fill
        << "\" fill-opacity=\"0.75\"/>\n";
  }

  // arrows
  for (int j = 0; j < b.arrows.rows(); ++j) {
    const double ax = s * b.arrows(j, 0), ay = s * b.arrows(j, 1);
    const double x2 = map.sx(ax), y2 = map.sy(ay);
    out << "<line x1=\"" << fmt(map.sx(0)) << "\" y1=\"" << fmt(map.sy(0))
        << "\" x2=\"" << fmt(x2) << "\" y2=\"" << fmt(y2)
        << "\" stroke=\"#d2691e\" stroke-width=\"1.6\"/>\n";
    // arrowhead
    const double dx = x2 - map.sx(0), dy = y2 - map.sy(0);
    const double len = std::hypot(dx, dy);
    if (len > 1e-9) {
      const double ux = dx / len, uy = dy / len;
      const double hx = x2 - 8 * ux, hy = y2 - 8 * uy;
      out << "<path d=\"M" << fmt(x2) << " " << fmt(y2) << " L"
          << fmt(hx - 3.5 * uy) << " " << fmt(hy + 3.5 * ux) << " L"
          << fmt(hx + 3.5 * uy) << " " << fmt(hy - 3.5 * ux)
          << " Z\" fill=\"#d2691e\"/>\n";
    }
    out << "<text x=\"" << fmt(x2 + 4) << "\" y=\"" << fmt(y2 - 4)
        << "\" font-size=\"12\" font-family=\"sans-serif\" fill=\"#663300\">"
        << b.feature_names[static_cast<size_t>(j)] << "</text>\n";
  }

  // axis labels with contribution ratios
  out << "<text x=\"" << fmt(size / 2) << "\" y=\"" << fmt(size - 16)
      << "\" font-size=\"14\" font-family=\"sans-serif\" text-anchor=\"middle\">"
      << b.x_label << "</text>\n";
  out << "<text x=\"18\" y=\"" << fmt(size / 2)
      << "\" font-size=\"14\" font-family=\"sans-serif\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 18 "
      << fmt(size / 2) << ")\">" << b.y_label << "</text>\n";
  if (b.color.size() > 0) {
    out << "<text x=\"" << fmt(size - margin) << "\" y=\"24\" font-size=\"12\" "
           "font-family=\"sans-serif\" text-anchor=\"end\">"
        << b.color_label << ": blue " << fmt(cmin) << " to red " << fmt(cmax)
        << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace ggfa
