#include "babylab/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "babylab/error.hpp"

namespace babylab::svg {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

Document::Document(double width, double height) : width_(width), height_(height) {}

void Document::rect(double x, double y, double w, double h, std::string_view fill,
                    std::string_view stroke) {
  body_ << "  <rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w)
        << "\" height=\"" << num(h) << "\" fill=\"" << escape(fill) << "\" stroke=\""
        << escape(stroke) << "\"/>\n";
}

void Document::line(double x1, double y1, double x2, double y2, std::string_view stroke,
                    double width) {
  body_ << "  <line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2)
        << "\" y2=\"" << num(y2) << "\" stroke=\"" << escape(stroke) << "\" stroke-width=\""
        << num(width) << "\"/>\n";
}

void Document::polyline(const std::vector<std::pair<double, double>>& points,
                        std::string_view stroke, double width) {
  body_ << "  <polyline fill=\"none\" stroke=\"" << escape(stroke) << "\" stroke-width=\""
        << num(width) << "\" points=\"";
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i) body_ << ' ';
    body_ << num(points[i].first) << ',' << num(points[i].second);
  }
  body_ << "\"/>\n";
}

void Document::text(double x, double y, std::string_view content, double size,
                    std::string_view anchor, double rotate) {
  body_ << "  <text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << num(size)
        << "\" font-family=\"sans-serif\" text-anchor=\"" << escape(anchor) << "\"";
  if (rotate != 0.0) {
    body_ << " transform=\"rotate(" << num(rotate) << ' ' << num(x) << ' ' << num(y) << ")\"";
  }
  body_ << ">" << escape(content) << "</text>\n";
}

void Document::title(std::string_view content) {
  body_ << "  <title>" << escape(content) << "</title>\n";
}

std::string Document::str() const {
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width_) << "\" height=\""
      << num(height_) << "\" viewBox=\"0 0 " << num(width_) << ' ' << num(height_) << "\">\n"
      << "  <rect x=\"0\" y=\"0\" width=\"" << num(width_) << "\" height=\"" << num(height_)
      << "\" fill=\"white\"/>\n"
      << body_.str() << "</svg>\n";
  return out.str();
}

void Document::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << str();
  if (!out) throw Error("cannot write " + path);
}

std::string diverging_color(double value) {
  const double v = std::clamp(value, -1.0, 1.0);
  // white at 0, (178, 24, 43) at +1, (33, 102, 172) at -1
  const std::array<double, 3> hi = v >= 0 ? std::array<double, 3>{178, 24, 43}
                                           : std::array<double, 3>{33, 102, 172};
  const double t = std::abs(v);
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x",
                static_cast<int>(std::lround(255 + (hi[0] - 255) * t)),
                static_cast<int>(std::lround(255 + (hi[1] - 255) * t)),
                static_cast<int>(std::lround(255 + (hi[2] - 255) * t)));
  return buf;
}

std::string palette(std::size_t index) {
  static constexpr std::array<const char*, 10> kColors = {
      "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
      "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return kColors[index % kColors.size()];
}

}  // namespace babylab::svg
