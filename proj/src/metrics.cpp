#include "drnet/metrics.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace drnet {

std::string format_pcc(std::size_t oe, std::size_t nt) {
    if (nt == 0 || oe > nt) throw ArgumentError("PCC needs 0 <= OE <= Nt and Nt > 0");
    // hundredths of a percent, rounded half up: floor((nt-oe)*10000/nt + 1/2)
    const unsigned long long num = static_cast<unsigned long long>(nt - oe) * 20000ULL + nt;
    const unsigned long long hundredths = num / (2ULL * nt);
    const std::string frac = std::to_string(hundredths % 100);
    return std::to_string(hundredths / 100) + "." + (frac.size() < 2 ? "0" + frac : frac);
}

void MetricsReport::check() const {
    if (oe != fp + fn) throw NumericError("metrics: OE != FP + FN");
    if (oe > nt) throw NumericError("metrics: OE exceeds Nt");
    const double expected = nt ? (1.0 - static_cast<double>(oe) / static_cast<double>(nt)) * 100.0 : 100.0;
    if (pcc != expected) throw NumericError("metrics: PCC does not match (1 - OE/Nt) * 100");
}

std::string MetricsReport::pcc_text() const { return nt ? format_pcc(oe, nt) : "100.00"; }

MetricsReport make_report(std::size_t fp, std::size_t fn, std::size_t nt) {
    MetricsReport m;
    m.fp = fp;
    m.fn = fn;
    m.oe = fp + fn;
    m.nt = nt;
    m.pcc = nt ? (1.0 - static_cast<double>(m.oe) / static_cast<double>(nt)) * 100.0 : 100.0;
    m.check();
    return m;
}

MetricsReport evaluate(const ChangeMask& pred, const ChangeMask& truth) {
    require_same_extents(pred.height, pred.width, truth.height, truth.width, "evaluate");
    std::size_t fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        fp += pred.values[i] == 1 && truth.values[i] == 0;
        fn += pred.values[i] == 0 && truth.values[i] == 1;
    }
    return make_report(fp, fn, pred.size());
}

std::vector<RowCheck> validate_table(const std::vector<TableRow>& rows, std::size_t nt) {
    if (nt == 0) throw ArgumentError("validate_table: Nt must be positive");
    std::vector<RowCheck> out;
    out.reserve(rows.size());
    for (const TableRow& r : rows) {
        RowCheck c;
        c.oe_ok = r.fp + r.fn == r.oe;
        const double pcc = (1.0 - static_cast<double>(r.oe) / static_cast<double>(nt)) * 100.0;
        c.pcc_ok = std::abs(pcc - r.pcc) <= 0.005 + 1e-9;
        out.push_back(c);
    }
    return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

template <typename V>
bool parse_number(const std::string& s, V& v) {
    if (s.empty()) return false;
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    return ec == std::errc() && p == end;
}

}  // namespace

std::vector<TableRow> parse_table_csv(std::string_view text) {
    std::vector<TableRow> rows;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0, offset = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t line_offset = offset;
        offset += line.size() + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
        const auto cells = split_csv(line);
        const bool header = first && !cells.empty() && cells[0] == "dataset";
        first = false;
        if (header) continue;
        TableRow r;
        if (cells.size() != 6 || !parse_number(cells[2], r.fp) || !parse_number(cells[3], r.fn) ||
            !parse_number(cells[4], r.oe) || !parse_number(cells[5], r.pcc))
            throw ParseError("malformed table row on line " + std::to_string(lineno) + ": '" + line + "'",
                             line_offset);
        r.dataset = cells[0];
        r.method = cells[1];
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string metrics_csv_header() { return "dataset,variant,FP,FN,OE,PCC"; }

std::string metrics_csv_line(const std::string& dataset, const std::string& variant, const MetricsReport& m) {
    return dataset + "," + variant + "," + std::to_string(m.fp) + "," + std::to_string(m.fn) + "," +
           std::to_string(m.oe) + "," + m.pcc_text();
}

std::string metrics_text(const MetricsReport& m) {
    return "FP=" + std::to_string(m.fp) + " FN=" + std::to_string(m.fn) + " OE=" + std::to_string(m.oe) +
           " Nt=" + std::to_string(m.nt) + " PCC=" + m.pcc_text() + "%";
}

}  // namespace drnet
