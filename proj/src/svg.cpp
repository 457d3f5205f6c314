#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "memvr/bench.hpp"
#include "memvr/errors.hpp"

namespace memvr {

namespace {

constexpr double kWidth = 760, kHeight = 460;
constexpr double kLeft = 70, kRight = 200, kTop = 40, kBottom = 50;
constexpr double kFloor = 1e-16;  // zero suboptimality is drawn at this level

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const MetricsTrace& trace, XAxis x_axis, const std::string& title) {
  struct Curve {
    std::string name;
    std::vector<std::pair<double, double>> pts;  // (counter, log10 mean suboptimality)
  };
  std::vector<Curve> curves;
  double x_max = 0, y_min = std::numeric_limits<double>::infinity(), y_max = -y_min;
  for (const auto& name : trace.algorithms()) {
    Curve c{name, {}};
    for (const auto& p : trace.aggregate(name)) {
      const double x = x_axis == XAxis::datapoint_evals ? static_cast<double>(p.datapoint_evals) : p.gradient_evals;
      const double y = std::log10(std::max(p.mean, kFloor));
      c.pts.emplace_back(x, y);
      x_max = std::max(x_max, x);
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
    curves.push_back(std::move(c));
  }
  if (curves.empty()) {
    y_min = -1;
    y_max = 0;
  }
  if (x_max <= 0) x_max = 1;
  y_min = std::floor(y_min);
  y_max = std::ceil(y_max);
  if (y_max <= y_min) y_max = y_min + 1;

  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + pw * x / x_max; };
  auto sy = [&](double y) { return kTop + ph * (y_max - y) / (y_max - y_min); };

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n",
      kWidth, kHeight, kWidth, kHeight);
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty())
    out += fmt::format("<text x=\"{}\" y=\"22\" font-size=\"14\">{}</text>\n", kLeft, escape(title));
  out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", kLeft,
                     kTop, pw, ph);

  // Decade gridlines on y, five linear ticks on x.
  const int step = std::max(1, static_cast<int>(std::ceil((y_max - y_min) / 10)));
  for (int e = static_cast<int>(y_min); e <= static_cast<int>(y_max); e += step) {
    const double y = sy(e);
    out += fmt::format("<line x1=\"{}\" y1=\"{:.2f}\" x2=\"{}\" y2=\"{:.2f}\" stroke=\"#ddd\"/>\n", kLeft, y,
                       kLeft + pw, y);
    out += fmt::format("<text x=\"{}\" y=\"{:.2f}\" text-anchor=\"end\">1e{}</text>\n", kLeft - 6, y + 4, e);
  }
  for (int k = 0; k <= 5; ++k) {
    const double xv = x_max * k / 5.0;
    out += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">{:.3g}</text>\n", sx(xv),
                       kTop + ph + 18, xv);
  }
  out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", kLeft + pw / 2, kHeight - 10,
                     x_axis == XAxis::datapoint_evals ? "datapoint evaluations" : "gradient evaluations");
  out += fmt::format(
      "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">mean suboptimality</text>\n",
      kTop + ph / 2, kTop + ph / 2);

  for (std::size_t k = 0; k < curves.size(); ++k) {
    const auto& c = curves[k];
    const char* color = kPalette[k % std::size(kPalette)];
    out += fmt::format("<polyline data-algorithm=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"",
                       escape(c.name), color);
    for (std::size_t p = 0; p < c.pts.size(); ++p)
      out += fmt::format("{}{:.2f},{:.2f}", p ? " " : "", sx(c.pts[p].first), sy(c.pts[p].second));
    out += "\"/>\n";
    const double ly = kTop + 10 + 18.0 * static_cast<double>(k);
    out += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                       kLeft + pw + 10, ly, kLeft + pw + 30, ly, color);
    out += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", kLeft + pw + 36, ly + 4, escape(c.name));
  }
  out += "</svg>\n";
  return out;
}

void write_svg(const MetricsTrace& trace, XAxis x_axis, const std::filesystem::path& path, const std::string& title) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write chart '{}'", path.string()));
  out << render_svg(trace, x_axis, title);
}

}  // namespace memvr
