// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#include "ndif/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <vector>

namespace ndif {

namespace {

constexpr double kWidth = 760, kHeight = 440;
constexpr double kLeft = 70, kRight = 150, kTop = 36, kBottom = 50;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
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

class Canvas {
 public:
  Canvas(double lo_m, double hi_m, std::string title) {
    lo_ = std::floor(std::log10(std::max(lo_m, 1.0)));
    hi_ = std::ceil(std::log10(std::max(hi_m, 10.0)));
    if (hi_ <= lo_) hi_ = lo_ + 1;
    os_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << num(kLeft) << "\" y=\"22\" font-size=\"14\">" << escape(title)
        << "</text>\n";
    axes();
  }

  double x(double tau) const {
    return kLeft + (kHorizonDays - tau) / kHorizonDays * (kWidth - kLeft - kRight);
  }
  double y(double metres) const {
    const double u = (std::log10(std::max(metres, 1.0)) - lo_) / (hi_ - lo_);
    return kHeight - kBottom - u * (kHeight - kTop - kBottom);
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& style) {
    os_ << "<polyline fill=\"none\" " << style << " points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      os_ << (i ? " " : "") << num(x(pts[i].first)) << ',' << num(y(pts[i].second));
    }
    os_ << "\"/>\n";
  }

  void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& style) {
    os_ << "<polygon " << style << " points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      os_ << (i ? " " : "") << num(x(pts[i].first)) << ',' << num(y(pts[i].second));
    }
    os_ << "\"/>\n";
  }

  void dot(double tau, double metres, bool filled) {
    os_ << "<circle cx=\"" << num(x(tau)) << "\" cy=\"" << num(y(metres)) << "\" r=\"3.5\" "
        << (filled ? "fill=\"black\"" : "fill=\"white\" stroke=\"black\"") << "/>\n";
  }

  void vline(double tau, const std::string& label) {
    os_ << "<line x1=\"" << num(x(tau)) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(x(tau))
        << "\" y2=\"" << num(kHeight - kBottom)
        << "\" stroke=\"#c0392b\" stroke-dasharray=\"2,3\"/>\n"
        << "<text x=\"" << num(x(tau) + 4) << "\" y=\"" << num(kTop + 12)
        << "\" fill=\"#c0392b\">" << escape(label) << "</text>\n";
  }

  void legend(const std::vector<std::pair<std::string, std::string>>& items) {
    double yy = kTop + 10;
    const double xx = kWidth - kRight + 14;
    for (const auto& [label, swatch] : items) {
      os_ << "<g transform=\"translate(" << num(xx) << ',' << num(yy) << ")\">" << swatch
          << "<text x=\"26\" y=\"4\">" << escape(label) << "</text></g>\n";
      yy += 20;
    }
  }

  std::string finish() {
    os_ << "</svg>\n";
    return os_.str();
  }

 private:
  void axes() {
    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    os_ << "<rect x=\"" << num(x0) << "\" y=\"" << num(y1) << "\" width=\"" << num(x1 - x0)
        << "\" height=\"" << num(y0 - y1) << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int d = 0; d <= kHorizonDays; ++d) {
      const double xx = x(d);
      os_ << "<line x1=\"" << num(xx) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(xx)
          << "\" y2=\"" << num(y0 + 5) << "\" stroke=\"#444\"/>"
          << "<text x=\"" << num(xx) << "\" y=\"" << num(y0 + 18)
          << "\" text-anchor=\"middle\">" << d << "</text>\n";
    }
    for (int e = static_cast<int>(lo_); e <= static_cast<int>(hi_); ++e) {
      const double yy = y(std::pow(10.0, e));
      os_ << "<line x1=\"" << num(x0) << "\" y1=\"" << num(yy) << "\" x2=\"" << num(x1)
          << "\" y2=\"" << num(yy) << "\" stroke=\"#ddd\"/>"
          << "<text x=\"" << num(x0 - 6) << "\" y=\"" << num(yy + 4)
          << "\" text-anchor=\"end\">1e" << e << "</text>\n";
    }
    os_ << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(kHeight - 12)
        << "\" text-anchor=\"middle\">days to TCA</text>\n"
        << "<text transform=\"translate(18," << num((y0 + y1) / 2)
        << ") rotate(-90)\" text-anchor=\"middle\">position sigma [m]</text>\n";
  }

  double lo_, hi_;
  std::ostringstream os_;
};

std::string line_swatch(const std::string& style) {
  return "<line x1=\"0\" y1=\"0\" x2=\"20\" y2=\"0\" " + style + "/>";
}

const std::string kMedianStyle = "stroke=\"#1f77b4\" stroke-width=\"2\"";
const std::string kBaselineStyle = "stroke=\"#ff7f0e\" stroke-width=\"2\" stroke-dasharray=\"6,4\"";
const std::string kBandStyle = "fill=\"#1f77b4\" fill-opacity=\"0.2\" stroke=\"none\"";

}  // namespace

std::string forecast_svg(const ConjunctionEvent& event, double cutoff_days,
                         std::span<const double> baseline, const ForecastResult& f) {
  const std::size_t L = f.mask.length();
  const std::size_t first = f.mask.cutoff_index > 0 ? f.mask.cutoff_index - 1 : 0;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  const auto widen = [&](double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  };
  for (const auto& o : event.observations) widen(o.sigma_m);
  for (std::size_t i = first; i < L; ++i) {
    widen(f.bands.low[i]);
    widen(f.bands.high[i]);
  }
  for (std::size_t i = first; i < baseline.size(); ++i) widen(baseline[i]);

  Canvas c(lo, hi, "event " + event.event_id + ", forecast from " + num(cutoff_days) +
                       " days");
  std::vector<std::pair<double, double>> band, median, base;
  for (std::size_t i = first; i < L; ++i) band.emplace_back(grid_tau(i), f.bands.high[i]);
  for (std::size_t i = L; i-- > first;) band.emplace_back(grid_tau(i), f.bands.low[i]);
  for (std::size_t i = first; i < L; ++i) median.emplace_back(grid_tau(i), f.bands.point[i]);
  for (std::size_t i = first; i < baseline.size(); ++i) {
    base.emplace_back(grid_tau(i), baseline[i]);
  }
  c.polygon(band, kBandStyle);
  c.polyline(base, kBaselineStyle);
  c.polyline(median, kMedianStyle);
  c.vline(cutoff_days, "cutoff");
  for (const auto& o : event.observations) c.dot(o.tau_days, o.sigma_m, o.tau_days >= cutoff_days);
  c.legend({{"observed", "<circle cx=\"10\" cy=\"0\" r=\"3.5\" fill=\"black\"/>"},
            {"held out", "<circle cx=\"10\" cy=\"0\" r=\"3.5\" fill=\"white\" stroke=\"black\"/>"},
            {"baseline", line_swatch(kBaselineStyle)},
            {"median", line_swatch(kMedianStyle)},
            {"5-95% band", "<rect x=\"0\" y=\"-6\" width=\"20\" height=\"12\" " + kBandStyle + "/>"}});
  return c.finish();
}

std::string samples_svg(std::span<const double> samples, std::size_t n,
                        const std::string& title) {
  if (n == 0 || samples.size() != n * kGridLength) {
    throw ShapeError("samples_svg: expected " + std::to_string(n) + " x " +
                     std::to_string(kGridLength) + " values");
  }
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  Canvas c(*lo, *hi, title);
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < kGridLength; ++i) {
      pts.emplace_back(grid_tau(i), samples[k * kGridLength + i]);
    }
    c.polyline(pts, std::string("stroke=\"") + palette[k % 8] + "\" stroke-width=\"1.5\"");
  }
  return c.finish();
}

}  // namespace ndif
