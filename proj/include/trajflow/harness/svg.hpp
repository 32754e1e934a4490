// Copyright 2026 The TrajFlow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TRAJFLOW_HARNESS_SVG_HPP
#define TRAJFLOW_HARNESS_SVG_HPP

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace trajflow::harness::svg {

inline constexpr int kWidth = 640;
inline constexpr int kHeight = 400;
inline constexpr int kMargin = 60;

namespace detail {

inline std::string num(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

inline std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

inline void header(std::ostringstream& out, const std::string& title, const std::string& y_label) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
      << "</text>\n"
      << "<text x=\"16\" y=\"" << kHeight / 2 << "\" transform=\"rotate(-90 16 " << kHeight / 2
      << ")\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n"
      << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\"" << kWidth - kMargin / 2
      << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin / 2 << "\" x2=\"" << kMargin << "\" y2=\""
      << kHeight - kMargin << "\" stroke=\"black\"/>\n";
}

inline double y_top(const std::vector<double>& ys) {
  const double hi = ys.empty() ? 1.0 : *std::max_element(ys.begin(), ys.end());
  return hi > 0.0 ? hi * 1.1 : 1.0;
}

inline double py(double y, double top) {
  return (kHeight - kMargin) - (y / top) * (kHeight - 1.5 * kMargin);
}

inline void y_ticks(std::ostringstream& out, double top) {
  for (int i = 0; i <= 4; ++i) {
    const double v = top * i / 4;
    out << "<text x=\"" << kMargin - 6 << "\" y=\"" << py(v, top) + 4 << "\" text-anchor=\"end\">" << num(v)
        << "</text>\n";
  }
}

}  // namespace detail

/// Polyline with markers; x values are spaced by value.
inline std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                              const std::vector<double>& xs, const std::vector<double>& ys) {
  std::ostringstream out;
  detail::header(out, title, y_label);
  const double top = detail::y_top(ys);
  detail::y_ticks(out, top);
  const double x_lo = xs.empty() ? 0.0 : *std::min_element(xs.begin(), xs.end());
  const double x_hi = xs.empty() ? 1.0 : *std::max_element(xs.begin(), xs.end());
  const double span = x_hi > x_lo ? x_hi - x_lo : 1.0;
  auto px = [&](double x) { return kMargin + (x - x_lo) / span * (kWidth - 1.5 * kMargin); };
  out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) out << px(xs[i]) << ',' << detail::py(ys[i], top) << ' ';
  out << "\"/>\n";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out << "<circle cx=\"" << px(xs[i]) << "\" cy=\"" << detail::py(ys[i], top)
        << "\" r=\"3.5\" fill=\"#1f77b4\"/>\n"
        << "<text x=\"" << px(xs[i]) << "\" y=\"" << kHeight - kMargin + 16 << "\" text-anchor=\"middle\">"
        << detail::num(xs[i]) << "</text>\n";
  }
  out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 14 << "\" text-anchor=\"middle\">"
      << detail::escape(x_label) << "</text>\n</svg>\n";
  return out.str();
}

inline std::string bar_chart(const std::string& title, const std::string& y_label,
                             const std::vector<std::string>& labels, const std::vector<double>& ys) {
  std::ostringstream out;
  detail::header(out, title, y_label);
  const double top = detail::y_top(ys);
  detail::y_ticks(out, top);
  const double slot = (kWidth - 1.5 * kMargin) / std::max<std::size_t>(labels.size(), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double x = kMargin + slot * i + slot * 0.15;
    const double y = detail::py(ys[i], top);
    out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << slot * 0.7 << "\" height=\""
        << (kHeight - kMargin) - y << "\" fill=\"#ff7f0e\"/>\n"
        << "<text x=\"" << x + slot * 0.35 << "\" y=\"" << kHeight - kMargin + 16 << "\" text-anchor=\"middle\">"
        << detail::escape(labels[i]) << "</text>\n"
        << "<text x=\"" << x + slot * 0.35 << "\" y=\"" << y - 4 << "\" text-anchor=\"middle\">"
        << detail::num(ys[i]) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace trajflow::harness::svg

#endif  // TRAJFLOW_HARNESS_SVG_HPP
