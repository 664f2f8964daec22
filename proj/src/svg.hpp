// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal deterministic SVG scatter/line plots.

#pragma once

#include <string>
#include <vector>

namespace normlab::detail {

struct SvgSeries {
    std::string label;
    std::string color;
    std::vector<double> x, y;
    bool line = false;
    bool dashed = false;
};

class SvgPlot {
public:
    SvgPlot(std::string title, std::string xlabel, std::string ylabel)
        : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {}

    void add(SvgSeries s) { series_.push_back(std::move(s)); }
    void vline(double x, std::string color) { vlines_.push_back({x, std::move(color)}); }
    std::string render() const;

private:
    struct VLine {
        double x;
        std::string color;
    };
    std::string title_, xlabel_, ylabel_;
    std::vector<SvgSeries> series_;
    std::vector<VLine> vlines_;
};

/// A small fixed palette, indexed cyclically.
const char* palette(std::size_t i);

}  // namespace normlab::detail
