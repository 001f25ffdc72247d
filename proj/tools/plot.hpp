#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

// Minimal static SVG charts.
namespace plot {

struct Box {
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

  void include(double x, double y) {
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }

  void pad(double frac) {
    const double dx = std::max(x1 - x0, 1e-9) * frac, dy = std::max(y1 - y0, 1e-9) * frac;
    x0 -= dx;
    x1 += dx;
    y0 -= dy;
    y1 += dy;
  }
};

inline Box empty_box() {
  const double inf = 1e300;
  return {inf, -inf, inf, -inf};
}

class Canvas {
 public:
  Canvas(Box box, std::string title, int width = 640, int height = 480)
      : box_(box), w_(width), h_(height) {
    os_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_ << "\" viewBox=\"0 0 "
        << w_ << ' ' << h_ << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os_ << "<text x=\"" << w_ / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
        << title << "</text>\n";
    os_ << "<rect x=\"" << m_ << "\" y=\"" << m_ << "\" width=\"" << w_ - 2 * m_ << "\" height=\"" << h_ - 2 * m_
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    axis_labels();
  }

  double sx(double x) const { return m_ + (x - box_.x0) / (box_.x1 - box_.x0) * (w_ - 2 * m_); }
  double sy(double y) const { return h_ - m_ - (y - box_.y0) / (box_.y1 - box_.y0) * (h_ - 2 * m_); }

  void polyline(const std::vector<double>& xs, const std::vector<double>& ys, const std::string& color,
                double width = 1.0, double opacity = 1.0) {
    os_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width << "\" stroke-opacity=\""
        << opacity << "\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) os_ << sx(xs[i]) << ',' << sy(ys[i]) << ' ';
    os_ << "\"/>\n";
  }

  void dot(double x, double y, const std::string& color, double r = 1.5, double opacity = 0.6) {
    os_ << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"" << r << "\" fill=\"" << color
        << "\" fill-opacity=\"" << opacity << "\"/>\n";
  }

  void legend(int row, const std::string& label, const std::string& color) {
    const double y = m_ + 16 + 16 * row;
    os_ << "<rect x=\"" << w_ - m_ - 120 << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\"" << color
        << "\"/><text x=\"" << w_ - m_ - 105 << "\" y=\"" << y
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << label << "</text>\n";
  }

  std::string str() const { return os_.str() + "</svg>\n"; }

 private:
  void axis_labels() {
    auto label = [&](double x, double y, const std::string& anchor, double v) {
      os_ << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor
          << "\" font-family=\"sans-serif\" font-size=\"10\">" << v << "</text>\n";
    };
    label(m_, h_ - m_ + 14, "start", box_.x0);
    label(w_ - m_, h_ - m_ + 14, "end", box_.x1);
    label(m_ - 4, h_ - m_, "end", box_.y0);
    label(m_ - 4, m_ + 8, "end", box_.y1);
  }

  Box box_;
  int w_, h_;
  double m_ = 48;
  std::ostringstream os_;
};

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  return colors[i % 7];
}

}  // namespace plot
