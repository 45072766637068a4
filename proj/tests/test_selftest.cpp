#include <gtest/gtest.h>

#include <algorithm>

#include "tpi/errors.hpp"
#include "tpi/selftest.hpp"

namespace tpi {
namespace {

class SelftestProperty : public ::testing::TestWithParam<std::string> {};

TEST_P(SelftestProperty, Passes) {
  const auto r = run_property(GetParam());
  EXPECT_EQ(r.name, GetParam());
  EXPECT_TRUE(r.pass) << r.detail;
}

INSTANTIATE_TEST_SUITE_P(All, SelftestProperty, ::testing::ValuesIn(selftest_property_names()),
                         [](const auto& info) { return info.param; });

TEST(Selftest, UnknownPropertyRejected) {
  EXPECT_THROW(run_property("no_such_property"), InvalidArgument);
}

TEST(Selftest, NamesAreUnique) {
  auto names = selftest_property_names();
  std::sort(names.begin(), names.end());
  EXPECT_EQ(std::adjacent_find(names.begin(), names.end()), names.end());
  EXPECT_GE(names.size(), 10u);
}

TEST(Selftest, SameSeedSameDetail) {
  SelftestOptions opt;
  opt.seed = 7;
  EXPECT_EQ(run_property("coincidence_oracle", opt).detail,
            run_property("coincidence_oracle", opt).detail);
}

}  // namespace
}  // namespace tpi
