#include "synergy/viz.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace synergy::viz {

namespace {

// Printable cell label: the character itself, or a hex escape for control
// bytes and UTF-8 continuation/lead bytes.
std::string cell_label(uint8_t b) {
    if (b >= 0x20 && b < 0x7F) {
        if (b == '<') return "&lt;";
        if (b == '>') return "&gt;";
        if (b == '&') return "&amp;";
        return std::string(1, static_cast<char>(b));
    }
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%02X", b);
    return std::string(buf);
}

std::string cell_label_ansi(uint8_t b) {
    if (b >= 0x20 && b < 0x7F) return std::string(1, static_cast<char>(b));
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%02X", b);
    return std::string(buf);
}

std::vector<double> normalized_weights(const VizRecord& r) {
    const auto [mn_it, mx_it] = std::minmax_element(r.w.begin(), r.w.end());
    const double mn = *mn_it, mx = *mx_it;
    std::vector<double> out(r.w.size(), 0.5);
    if (mx > mn)
        for (size_t i = 0; i < r.w.size(); ++i) out[i] = (r.w[i] - mn) / (mx - mn);
    return out;
}

}  // namespace

std::string render_routing(const VizRecord& record, VizFormat format) {
    record.validate();
    const auto intensity = normalized_weights(record);
    std::ostringstream os;
    if (format == VizFormat::html) {
        os << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
           << "<title>router weights</title></head><body>\n"
           << "<div style=\"font-family:monospace;line-height:2.2\">\n";
        for (size_t i = 0; i < record.text_bytes.size(); ++i) {
            // darker green for greater weight
            const int g = 255 - static_cast<int>(intensity[i] * 160.0);
            const char* border = record.m[i] ? "2px solid #000" : "1px solid #bbb";
            os << "<span class=\"cell" << (record.m[i] ? " picked" : "")
               << "\" style=\"display:inline-block;min-width:1.1em;text-align:center;"
               << "margin:1px;border:" << border << ";background-color:rgb(" << (g - 60) << ","
               << g << "," << (g - 60) << ")\">" << cell_label(record.text_bytes[i]) << "</span>";
        }
        os << "\n</div></body></html>\n";
    } else {
        for (size_t i = 0; i < record.text_bytes.size(); ++i) {
            const int g = 255 - static_cast<int>(intensity[i] * 160.0);
            os << "\x1b[48;2;" << (g - 60) << ";" << g << ";" << (g - 60) << "m";
            if (record.m[i]) os << "\x1b[1;4m";  // bold+underline marks picked
            os << cell_label_ansi(record.text_bytes[i]) << "\x1b[0m";
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace synergy::viz
