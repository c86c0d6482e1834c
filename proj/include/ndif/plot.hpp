// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>

#include "ndif/data.hpp"
#include "ndif/forecast.hpp"

namespace ndif {

// Self-contained SVG documents (no scripts, fonts or external references).
// Time runs left to right towards TCA; sigma is drawn on a log axis.

// Observations (filled before the cutoff, hollow after), cutoff line,
// last-value baseline, forecast median and the quantile band.
std::string forecast_svg(const ConjunctionEvent& event, double cutoff_days,
                         std::span<const double> baseline, const ForecastResult& forecast);

// One line per sample; `samples` is n x grid length, metres.
std::string samples_svg(std::span<const double> samples, std::size_t n,
                        const std::string& title);

}  // namespace ndif
