#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "drnet/image.hpp"

namespace drnet {

// FP: unchanged in truth, predicted changed. FN: changed in truth, predicted unchanged.
struct MetricsReport {
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t oe = 0;
    std::size_t nt = 0;
    double pcc = 0;  // percent

    // Recomputes OE and PCC from the counts; throws NumericError if inconsistent.
    void check() const;
    // PCC rounded half up to two decimals, e.g. "98.75".
    std::string pcc_text() const;
};

MetricsReport make_report(std::size_t fp, std::size_t fn, std::size_t nt);
MetricsReport evaluate(const ChangeMask& pred, const ChangeMask& truth);

// Round-half-up two-decimal text of (1 - oe/nt) * 100, computed in integers.
std::string format_pcc(std::size_t oe, std::size_t nt);

struct TableRow {
    std::string dataset;
    std::string method;
    std::size_t fp = 0, fn = 0, oe = 0;
    double pcc = 0;
};

struct RowCheck {
    bool oe_ok = false;   // OE == FP + FN
    bool pcc_ok = false;  // |(1 - OE/Nt) * 100 - PCC| <= 0.005
    bool ok() const { return oe_ok && pcc_ok; }
};

std::vector<RowCheck> validate_table(const std::vector<TableRow>& rows, std::size_t nt);

// CSV with header `dataset,method,FP,FN,OE,PCC`. Blank lines and a missing
// header are tolerated; a malformed row throws ParseError naming its line.
std::vector<TableRow> parse_table_csv(std::string_view text);

// `dataset,variant,FP,FN,OE,PCC`
std::string metrics_csv_header();
std::string metrics_csv_line(const std::string& dataset, const std::string& variant, const MetricsReport& m);
std::string metrics_text(const MetricsReport& m);

}  // namespace drnet
