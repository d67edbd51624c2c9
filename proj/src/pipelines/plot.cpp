#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>

#include "lno/error.hpp"
#include "lno/pipelines.hpp"

namespace lno::pipelines {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string f = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\r')) f.pop_back();
    while (!f.empty() && f.front() == ' ') f.erase(f.begin());
    out.push_back(std::move(f));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

constexpr double kWidth = 640, kHeight = 420, kLeft = 70, kRight = 160, kTop = 40, kBottom = 50;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

struct Range {
  double lo, hi;
  double map(double v, double a, double b) const { return a + (v - lo) / (hi - lo) * (b - a); }
};

Range padded(double lo, double hi) {
  if (hi - lo <= 0.0) {
    const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
    return {lo - pad, hi + pad};
  }
  return {lo, hi};
}

std::string header(const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" + fmt(kHeight) +
                  "\" viewBox=\"0 0 " + fmt(kWidth) + " " + fmt(kHeight) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
       escape(title) + "</text>\n";
  return s;
}

std::string axes(const std::string& x_label, const std::string& y_label, const Range& xr, const Range& yr) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  std::string s;
  s += "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(y0) + "\" x2=\"" + fmt(x1) + "\" y2=\"" + fmt(y0) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(y0) + "\" x2=\"" + fmt(x0) + "\" y2=\"" + fmt(y1) +
       "\" stroke=\"black\"/>\n";
  const std::string font = "font-family=\"sans-serif\" font-size=\"11\"";
  s += "<text x=\"" + fmt(x0) + "\" y=\"" + fmt(y0 + 16) + "\" " + font + ">" + label(xr.lo) + "</text>\n";
  s += "<text x=\"" + fmt(x1) + "\" y=\"" + fmt(y0 + 16) + "\" text-anchor=\"end\" " + font + ">" + label(xr.hi) +
       "</text>\n";
  s += "<text x=\"" + fmt(x0 - 6) + "\" y=\"" + fmt(y0) + "\" text-anchor=\"end\" " + font + ">" + label(yr.lo) +
       "</text>\n";
  s += "<text x=\"" + fmt(x0 - 6) + "\" y=\"" + fmt(y1 + 8) + "\" text-anchor=\"end\" " + font + ">" + label(yr.hi) +
       "</text>\n";
  s += "<text x=\"" + fmt((x0 + x1) / 2) + "\" y=\"" + fmt(kHeight - 12) + "\" text-anchor=\"middle\" " + font + ">" +
       escape(x_label) + "</text>\n";
  s += "<text x=\"16\" y=\"" + fmt((y0 + y1) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       fmt((y0 + y1) / 2) + ")\" " + font + ">" + escape(y_label) + "</text>\n";
  return s;
}

}  // namespace

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields = split_fields(line);
    if (t.header.empty()) {
      for (const std::string& f : fields)
        if (f.empty()) throw ParseError("csv line " + std::to_string(line_no) + ": empty column name");
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw ParseError("csv line " + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                       " fields, got " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw ParseError("csv line 1: missing header row");
  return t;
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ContractError("csv has no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

bool CsvTable::numeric(std::size_t col) const {
  double v;
  for (const auto& r : rows)
    if (!parse_number(r.at(col), v)) return false;
  return true;
}

std::vector<double> CsvTable::numbers(std::size_t col) const {
  std::vector<double> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double v;
    if (!parse_number(rows[i].at(col), v)) {
      throw ParseError("csv row " + std::to_string(i + 1) + ": '" + rows[i][col] + "' in column '" + header.at(col) +
                       "' is not a number");
    }
    out.push_back(v);
  }
  return out;
}

std::string render_line_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                            const std::vector<Series>& series) {
  if (series.empty()) throw ContractError("plot '" + title + "' has no series");
  double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
  for (const Series& s : series) {
    if (s.x.empty() || s.x.size() != s.y.size()) {
      throw ContractError("series '" + s.name + "' in plot '" + title + "' is empty or has mismatched x/y lengths");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        throw ContractError("series '" + s.name + "' has a non-finite point");
      }
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  }
  const Range xr = padded(xlo, xhi), yr = padded(ylo, yhi);
  std::string svg = header(title) + axes(x_label, y_label, xr, yr);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    const char* color = kColors[k % std::size(kColors)];
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) svg += ' ';
      svg += fmt(xr.map(s.x[i], kLeft, kWidth - kRight)) + "," + fmt(yr.map(s.y[i], kHeight - kBottom, kTop));
    }
    svg += "\"/>\n";
    const double ly = kTop + 16.0 * static_cast<double>(k);
    svg += "<text x=\"" + fmt(kWidth - kRight + 12) + "\" y=\"" + fmt(ly + 4) + "\" fill=\"" + color +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + escape(s.name) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string render_heatmap_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                               const std::vector<double>& x, const std::vector<double>& y,
                               const std::vector<double>& values) {
  if (values.empty()) throw ContractError("heatmap '" + title + "' has no cells");
  if (x.size() != values.size() || y.size() != values.size()) {
    throw ContractError("heatmap '" + title + "' has mismatched column lengths");
  }
  const std::set<double> xs(x.begin(), x.end()), ys(y.begin(), y.end());
  const std::vector<double> xv(xs.begin(), xs.end()), yv(ys.begin(), ys.end());
  const auto [vmin_it, vmax_it] = std::minmax_element(values.begin(), values.end());
  const Range vr = padded(*vmin_it, *vmax_it);
  const double cw = (kWidth - kLeft - kRight) / static_cast<double>(xv.size());
  const double ch = (kHeight - kTop - kBottom) / static_cast<double>(yv.size());
  std::string svg = header(title);
  for (std::size_t k = 0; k < values.size(); ++k) {
    const auto xi = static_cast<double>(std::lower_bound(xv.begin(), xv.end(), x[k]) - xv.begin());
    const auto yi = static_cast<double>(std::lower_bound(yv.begin(), yv.end(), y[k]) - yv.begin());
    const double t = vr.map(values[k], 0.0, 1.0);
    // Light yellow (low) to dark blue (high).
    const int r = static_cast<int>(std::lround(255 - t * (255 - 33)));
    const int g = static_cast<int>(std::lround(255 - t * (255 - 64)));
    const int b = static_cast<int>(std::lround(204 - t * (204 - 154)));
    char color[16];
    std::snprintf(color, sizeof color, "#%02x%02x%02x", r, g, b);
    const double px = kLeft + xi * cw, py = kHeight - kBottom - (yi + 1) * ch;
    svg += "<rect x=\"" + fmt(px) + "\" y=\"" + fmt(py) + "\" width=\"" + fmt(cw) + "\" height=\"" + fmt(ch) +
           "\" fill=\"" + color + "\" stroke=\"white\"/>\n";
    svg += "<text x=\"" + fmt(px + cw / 2) + "\" y=\"" + fmt(py + ch / 2 + 4) + "\" text-anchor=\"middle\" fill=\"" +
           (t > 0.5 ? "white" : "black") + "\" font-family=\"sans-serif\" font-size=\"11\">" + label(values[k]) +
           "</text>\n";
  }
  const std::string font = "font-family=\"sans-serif\" font-size=\"11\"";
  for (std::size_t i = 0; i < xv.size(); ++i) {
    svg += "<text x=\"" + fmt(kLeft + (static_cast<double>(i) + 0.5) * cw) + "\" y=\"" + fmt(kHeight - kBottom + 16) +
           "\" text-anchor=\"middle\" " + font + ">" + label(xv[i]) + "</text>\n";
  }
  for (std::size_t i = 0; i < yv.size(); ++i) {
    svg += "<text x=\"" + fmt(kLeft - 6) + "\" y=\"" +
           fmt(kHeight - kBottom - (static_cast<double>(i) + 0.5) * ch + 4) + "\" text-anchor=\"end\" " + font + ">" +
           label(yv[i]) + "</text>\n";
  }
  svg += "<text x=\"" + fmt((kLeft + kWidth - kRight) / 2) + "\" y=\"" + fmt(kHeight - 12) +
         "\" text-anchor=\"middle\" " + font + ">" + escape(x_label) + "</text>\n";
  svg += "<text x=\"16\" y=\"" + fmt((kTop + kHeight - kBottom) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         fmt((kTop + kHeight - kBottom) / 2) + ")\" " + font + ">" + escape(y_label) + "</text>\n";
  svg += "</svg>\n";
  return svg;
}

}  // namespace lno::pipelines
