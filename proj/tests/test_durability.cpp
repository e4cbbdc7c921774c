#include <gtest/gtest.h>

#include "support/durability.hpp"

TEST(Durability, KillNineMidStormLosesNoAcknowledgedRecord) {
    const auto r = fundaq::testkit::run_durability(FUNDAQ_CLI_PATH, 500, 250);
    EXPECT_TRUE(r.ok()) << r.detail;
    EXPECT_GE(r.acked, 250u);
    EXPECT_LT(r.acked, 500u) << "the kill landed after the storm finished";
    EXPECT_GE(r.replayed, r.acked);
    EXPECT_EQ(r.missing, 0u);
    EXPECT_TRUE(r.export_parsed);
    EXPECT_TRUE(r.progress_matches);
}

TEST(Durability, RepeatedKillsAtDifferentPoints) {
    for (std::size_t at : {1u, 77u, 420u}) {
        const auto r = fundaq::testkit::run_durability(FUNDAQ_CLI_PATH, 500, at, 3, 100 + at);
        EXPECT_TRUE(r.ok()) << "kill after " << at << ": " << r.detail;
    }
}
