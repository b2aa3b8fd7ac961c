#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include "ganselect/error.hpp"
#include "ganselect/experiment.hpp"

namespace ganselect {

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string fixed(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string escape_xml(const std::string& s) {
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

void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
    std::ostringstream s;
    auto line = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) s << (i ? "," : "") << csv_field(fields[i]);
        s << "\n";
    };
    line(header);
    for (const auto& r : rows) {
        if (r.size() != header.size()) throw UsageError("write_table: row width does not match header");
        line(r);
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << s.str();
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw UsageError("quantile: empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::string boxplot_svg(const std::string& title, const std::vector<std::string>& labels,
                        const std::vector<std::vector<double>>& groups, double baseline) {
    if (labels.size() != groups.size()) throw UsageError("boxplot_svg: one label per group");
    const double width = 80.0 + 60.0 * static_cast<double>(std::max<std::size_t>(groups.size(), 1));
    const double height = 300.0, top = 40.0, bottom = 250.0, left = 60.0;

    double lo = baseline, hi = baseline;
    for (const auto& g : groups)
        for (double v : g)
            if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
    if (!(hi > lo)) lo -= 0.5, hi += 0.5;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto y = [&](double v) { return bottom - (v - lo) / (hi - lo) * (bottom - top); };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width) << "\" height=\"" << fixed(height)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << fixed(width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" << escape_xml(title)
      << "</text>\n";
    s << "<line x1=\"" << fixed(left) << "\" y1=\"" << fixed(top) << "\" x2=\"" << fixed(left) << "\" y2=\""
      << fixed(bottom) << "\" stroke=\"black\"/>\n";
    for (double t : {lo + pad, 0.5 * (lo + hi), hi - pad}) {
        s << "<text x=\"" << fixed(left - 4) << "\" y=\"" << fixed(y(t) + 4) << "\" text-anchor=\"end\">"
          << format_double(std::round(t * 1e4) / 1e4) << "</text>\n";
    }
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const double cx = left + 40.0 + 60.0 * static_cast<double>(i);
        std::vector<double> g;
        for (double v : groups[i])
            if (std::isfinite(v)) g.push_back(v);
        s << "<text x=\"" << fixed(cx) << "\" y=\"" << fixed(bottom + 18) << "\" text-anchor=\"middle\">"
          << escape_xml(labels[i]) << "</text>\n";
        if (g.empty()) continue;
        const double q1 = quantile(g, 0.25), med = quantile(g, 0.5), q3 = quantile(g, 0.75);
        const double mn = *std::min_element(g.begin(), g.end()), mx = *std::max_element(g.begin(), g.end());
        s << "<line x1=\"" << fixed(cx) << "\" y1=\"" << fixed(y(mx)) << "\" x2=\"" << fixed(cx) << "\" y2=\""
          << fixed(y(q3)) << "\" stroke=\"black\"/>\n";
        s << "<line x1=\"" << fixed(cx) << "\" y1=\"" << fixed(y(q1)) << "\" x2=\"" << fixed(cx) << "\" y2=\""
          << fixed(y(mn)) << "\" stroke=\"black\"/>\n";
        for (double w : {mn, mx})
            s << "<line x1=\"" << fixed(cx - 8) << "\" y1=\"" << fixed(y(w)) << "\" x2=\"" << fixed(cx + 8)
              << "\" y2=\"" << fixed(y(w)) << "\" stroke=\"black\"/>\n";
        s << "<rect x=\"" << fixed(cx - 18) << "\" y=\"" << fixed(y(q3)) << "\" width=\"36\" height=\""
          << fixed(std::max(y(q1) - y(q3), 0.5)) << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
        s << "<line x1=\"" << fixed(cx - 18) << "\" y1=\"" << fixed(y(med)) << "\" x2=\"" << fixed(cx + 18)
          << "\" y2=\"" << fixed(y(med)) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    }
    s << "<line x1=\"" << fixed(left) << "\" y1=\"" << fixed(y(baseline)) << "\" x2=\"" << fixed(width - 10)
      << "\" y2=\"" << fixed(y(baseline)) << "\" stroke=\"red\" stroke-width=\"1.5\"/>\n";
    s << "</svg>\n";
    return s.str();
}

LogLevel log_level() {
    const char* env = std::getenv("GANSELECT_LOG");
    if (!env) return LogLevel::warn;
    const std::string v = env;
    if (v == "error") return LogLevel::error;
    if (v == "info") return LogLevel::info;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::warn;
}

void log(LogLevel level, const std::string& message) {
    static std::mutex mutex;
    if (level > log_level()) return;
    static constexpr const char* names[] = {"error", "warn", "info", "debug"};
    const std::lock_guard lock(mutex);
    std::cerr << "[" << names[static_cast<int>(level)] << "] " << message << "\n";
}

}  // namespace ganselect
