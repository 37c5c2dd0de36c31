#pragma once

#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace babylab::svg {

std::string escape(std::string_view text);

// Minimal static SVG writer: no scripts, no external references.
class Document {
 public:
  Document(double width, double height);

  void rect(double x, double y, double w, double h, std::string_view fill,
            std::string_view stroke = "none");
  void line(double x1, double y1, double x2, double y2, std::string_view stroke,
            double width = 1.0);
  void polyline(const std::vector<std::pair<double, double>>& points, std::string_view stroke,
                double width = 1.5);
  void text(double x, double y, std::string_view content, double size = 11.0,
            std::string_view anchor = "start", double rotate = 0.0);
  void title(std::string_view content);

  std::string str() const;
  void save(const std::string& path) const;

 private:
  double width_, height_;
  std::ostringstream body_;
};

// Diverging colour for a value in [-1, 1]: blue through white to red.
std::string diverging_color(double value);

// Categorical palette entry.
std::string palette(std::size_t index);

}  // namespace babylab::svg
