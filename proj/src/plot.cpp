#include "hmmseq/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace hmmseq {

namespace {

constexpr double kSize = 480.0;
constexpr double kLeft = 60.0, kRight = 20.0, kTop = 40.0, kBottom = 50.0;

struct Frame {
    double xmax = 1.0;
    double ymax = 1.0;
    double px(double x) const { return kLeft + x / xmax * (kSize - kLeft - kRight); }
    double py(double y) const { return kSize - kBottom - y / ymax * (kSize - kTop - kBottom); }
};

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

void open_svg(std::ostringstream& os, const Frame& f, const std::string& title, const std::string& xlabel,
              const std::string& ylabel) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\" viewBox=\"0 0 480 480\">\n";
    os << "<rect width=\"480\" height=\"480\" fill=\"white\"/>\n";
    os << "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"black\">\n";
    os << "<text x=\"240\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << "</text>\n";
    os << "<text x=\"" << num(kLeft + (kSize - kLeft - kRight) / 2) << "\" y=\"470\" text-anchor=\"middle\">"
       << escape(xlabel) << "</text>\n";
    os << "<text x=\"16\" y=\"" << num(kTop + (kSize - kTop - kBottom) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << num(kTop + (kSize - kTop - kBottom) / 2) << ")\">" << escape(ylabel) << "</text>\n";
    for (int k = 0; k <= 4; ++k) {
        const double x = f.xmax * k / 4.0, y = f.ymax * k / 4.0;
        os << "<text x=\"" << num(f.px(x)) << "\" y=\"" << num(kSize - kBottom + 16) << "\" text-anchor=\"middle\">"
           << num(x) << "</text>\n";
        os << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(f.py(y) + 4) << "\" text-anchor=\"end\">" << num(y)
           << "</text>\n";
    }
    os << "</g>\n";
    os << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(kSize - kLeft - kRight)
       << "\" height=\"" << num(kSize - kTop - kBottom) << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << num(f.px(0)) << "\" y1=\"" << num(f.py(0)) << "\" x2=\"" << num(f.px(std::min(f.xmax, f.ymax)))
       << "\" y2=\"" << num(f.py(std::min(f.xmax, f.ymax))) << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
}

void polyline(std::ostringstream& os, const Frame& f, const std::vector<double>& x, const std::vector<double>& y) {
    os << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? " " : "") << num(f.px(x[i])) << ',' << num(f.py(y[i]));
    os << "\"/>\n";
}

} // namespace

std::string roc_svg(const RocCurve& roc, const std::string& title) {
    std::ostringstream os;
    Frame f;
    open_svg(os, f, title + " (AUC " + num(roc.auc) + ")", "false positive rate", "true positive rate");
    polyline(os, f, roc.fpr, roc.tpr);
    os << "</svg>\n";
    return os.str();
}

std::string calibration_svg(const std::vector<CalibrationPoint>& points, const std::string& title) {
    std::ostringstream os;
    Frame f;
    double top = 0.0;
    for (const auto& p : points) top = std::max({top, p.nominal, p.observed});
    f.xmax = f.ymax = top > 0.0 ? std::min(1.0, top * 1.1) : 1.0;
    open_svg(os, f, title, "nominal FDR", "observed FDR");
    std::vector<double> x, y;
    for (const auto& p : points) {
        x.push_back(p.nominal);
        y.push_back(p.observed);
    }
    polyline(os, f, x, y);
    for (std::size_t i = 0; i < x.size(); ++i)
        os << "<circle cx=\"" << num(f.px(x[i])) << "\" cy=\"" << num(f.py(y[i])) << "\" r=\"2.5\" fill=\"black\"/>\n";
    os << "</svg>\n";
    return os.str();
}

} // namespace hmmseq
