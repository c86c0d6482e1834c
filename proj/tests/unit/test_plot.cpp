// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <regex>

#include "ndif/eval.hpp"
#include "ndif/plot.hpp"
#include "xml_check.hpp"

using namespace ndif;

namespace {

long count(const std::string& s, const std::string& pattern) {
  const std::regex re(pattern);
  return std::distance(std::sregex_iterator(s.begin(), s.end(), re), std::sregex_iterator());
}

ForecastResult fake_forecast(double cutoff) {
  ForecastResult r;
  r.event_id = "P&1";
  r.num_samples = 2;
  r.mask = Mask::prefix(kGridLength, cutoff_index_for(cutoff));
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < kGridLength; ++i) {
      r.trajectories.push_back(1000.0 + 10.0 * static_cast<double>(i) * (1.0 + k));
    }
  }
  r.bands = aggregate(r.trajectories, 2, kGridLength);
  return r;
}

}  // namespace

TEST(Plot, ForecastSvgIsWellFormedAndSelfContained) {
  const ConjunctionEvent e{"P&1", {{6.0, 9000.0}, {3.0, 3000.0}, {1.0, 800.0}}};
  const auto svg = forecast_svg(e, 2.0, baseline_forecast(e, 2.0), fake_forecast(2.0));
  std::string why;
  EXPECT_TRUE(ndif::testing::well_formed_xml(svg, &why)) << why;
  EXPECT_EQ(svg.find("href"), std::string::npos);
  EXPECT_EQ(svg.find("<script"), std::string::npos);
  EXPECT_EQ(svg.find("url("), std::string::npos);
  // The only URI is the SVG namespace.
  EXPECT_EQ(count(svg, "https?://"), 1);
  EXPECT_NE(svg.find("P&amp;1"), std::string::npos);
  // Observed, cutoff, baseline, median and band are all drawn.
  // Three observations plus the two legend swatches.
  EXPECT_EQ(count(svg, "<circle "), 5);
  EXPECT_EQ(count(svg, "fill=\"white\" stroke=\"black\""), 2);  // held out + swatch
  for (const char* label : {"cutoff", "baseline", "median", "5-95% band", "<polygon"}) {
    EXPECT_NE(svg.find(label), std::string::npos) << label;
  }
}

TEST(Plot, SamplesSvg) {
  std::vector<double> s(2 * kGridLength, 500.0);
  s[3] = 40000.0;
  const auto svg = samples_svg(s, 2, "samples");
  std::string why;
  EXPECT_TRUE(ndif::testing::well_formed_xml(svg, &why)) << why;
  EXPECT_EQ(count(svg, "<polyline"), 2);
  EXPECT_THROW(samples_svg(s, 3, "x"), ShapeError);
}

TEST(XmlCheck, RejectsBrokenDocuments) {
  EXPECT_TRUE(ndif::testing::well_formed_xml("<?xml version=\"1.0\"?>\n<a><b x=\"1\"/></a>\n"));
  EXPECT_FALSE(ndif::testing::well_formed_xml("<a><b></a></b>"));
  EXPECT_FALSE(ndif::testing::well_formed_xml("<a>"));
  EXPECT_FALSE(ndif::testing::well_formed_xml("<a>x & y</a>"));
  EXPECT_FALSE(ndif::testing::well_formed_xml("<a x=1/>"));
  EXPECT_FALSE(ndif::testing::well_formed_xml("<a/><b/>"));
}
