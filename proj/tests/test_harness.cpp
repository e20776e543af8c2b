// Copyright 2026 The proxeval Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "proxeval/harness.hpp"
#include "proxeval/store.hpp"
#include "support.hpp"

using namespace proxeval;
using namespace proxeval::testing;

namespace {

const std::vector<SensorKind> kLight{SensorKind::Light};

std::vector<SensorTrace> all_traces(const Environment& env) { return env.store().traces(); }

} // namespace

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

TEST(ProtocolMessage, EncodesIdThenSensorCode) {
    const auto id = *TransactionId::from_hex("00112233445566");
    const ProtocolMessage m{id, SensorKind::MagneticField};
    const auto w = m.encode();
    ASSERT_EQ(w.size(), 8u);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(w[i], 0x11 * i);
    EXPECT_EQ(w[7], sensor_info(SensorKind::MagneticField).code);
    EXPECT_EQ(ProtocolMessage::decode(w), m);
}

TEST(ProtocolMessage, RoundTripsEverySensor) {
    Rng r(1);
    for (auto s : kAllSensors) {
        const ProtocolMessage m{id_from(r.index(0, ~0ull >> 8)), s};
        EXPECT_EQ(ProtocolMessage::decode(m.encode()), m);
    }
}

TEST(ProtocolMessage, RejectsMalformedBytes) {
    auto w = ProtocolMessage{id_from(5), SensorKind::Light}.encode();
    EXPECT_FALSE(ProtocolMessage::decode(std::span(w).first(7)).has_value());
    std::vector<std::uint8_t> longer(w.begin(), w.end());
    longer.push_back(0);
    EXPECT_FALSE(ProtocolMessage::decode(longer).has_value());
    w[7] = 0xff;
    EXPECT_FALSE(ProtocolMessage::decode(w).has_value());
    EXPECT_FALSE(ProtocolMessage::decode({}).has_value());
}

// ---------------------------------------------------------------------------
// Fault schedules
// ---------------------------------------------------------------------------

TEST(FaultSchedule, ParsesCommentsAndSeparators) {
    std::istringstream in("# header\n3 corrupt_response_id\n\n7,drop_dti_broadcast  # trailing\n 12\tcorrupt_payload\n");
    const auto f = FaultSchedule::parse(in);
    EXPECT_EQ(f.size(), 3u);
    EXPECT_EQ(f.at(3), FaultKind::CorruptResponseId);
    EXPECT_EQ(f.at(7), FaultKind::DropDtiBroadcast);
    EXPECT_EQ(f.at(12), FaultKind::CorruptPayload);
    EXPECT_FALSE(f.at(4).has_value());
}

TEST(FaultSchedule, WriteThenParseIsIdentity) {
    const auto f = FaultSchedule::random(300, 0.2, 9);
    std::stringstream ss;
    f.write(ss);
    EXPECT_EQ(FaultSchedule::parse(ss).entries(), f.entries());
}

TEST(FaultSchedule, ErrorsNameTheLine) {
    for (const auto& [text, line] : std::vector<std::pair<std::string, std::size_t>>{
             {"1 corrupt_payload\n2 melt\n", 2},
             {"x corrupt_payload\n", 1},
             {"-1 corrupt_payload\n", 1},
             {"\n\n4\n", 3},
             {"4 corrupt_payload extra\n", 1},
         }) {
        std::istringstream in(text);
        try {
            FaultSchedule::parse(in, "f.txt");
            ADD_FAILURE() << text;
        } catch (const ParseError& e) {
            EXPECT_EQ(e.line(), line) << text;
        }
    }
    EXPECT_THROW(FaultSchedule::load("/nonexistent/faults.txt"), IoError);
}

TEST(FaultSchedule, RandomRateAndKinds) {
    const auto f = FaultSchedule::random(10000, 0.1, 3);
    EXPECT_NEAR(double(f.size()) / 10000.0, 0.1, 0.01);
    std::set<FaultKind> kinds;
    for (const auto& [i, k] : f.entries()) kinds.insert(k);
    EXPECT_EQ(kinds.size(), 3u);
    const FaultKind only[] = {FaultKind::DropDtiBroadcast};
    const auto g = FaultSchedule::random(100, 0.5, 3, only);
    EXPECT_GT(g.size(), 0u);
    for (const auto& [i, k] : g.entries()) EXPECT_EQ(k, FaultKind::DropDtiBroadcast);
}

// ---------------------------------------------------------------------------
// Devices
// ---------------------------------------------------------------------------

TEST(InstrumentDevice, IgnoresUnknownAndMalformedMessages) {
    SyntheticWorld world(small_scenario(3, kLight));
    InstrumentDevice ti(DeviceRole::TI, world);
    const auto unknown = ProtocolMessage{id_from(77), SensorKind::Light}.encode();
    EXPECT_FALSE(ti.on_message(unknown).has_value());
    const std::uint8_t junk[] = {1, 2, 3};
    EXPECT_FALSE(ti.on_message(junk).has_value());
    const auto plan = world.begin(SensorKind::Light, 500);
    EXPECT_FALSE(ti.on_message(ProtocolMessage{plan.id, SensorKind::Gravity}.encode()).has_value());
    const auto ok = ProtocolMessage{plan.id, SensorKind::Light}.encode();
    EXPECT_EQ(ti.on_message(ok), ok);
    const auto trace = ti.take(plan.id);
    ASSERT_TRUE(trace.has_value());
    EXPECT_EQ(trace->role(), DeviceRole::TI);
    EXPECT_FALSE(ti.take(plan.id).has_value());
}

TEST(InstrumentDevice, DistantInstrumentDoesNotReply) {
    SyntheticWorld world(small_scenario(3, kLight));
    InstrumentDevice dti(DeviceRole::DTI, world);
    const auto plan = world.begin(SensorKind::Light, 500);
    EXPECT_FALSE(dti.on_message(ProtocolMessage{plan.id, SensorKind::Light}.encode()).has_value());
    EXPECT_TRUE(dti.take(plan.id).has_value());
}

// ---------------------------------------------------------------------------
// Transactions (emulated)
// ---------------------------------------------------------------------------

TEST(RunTransaction, CleanRunStoresAValidTriple) {
    auto env = make_emulated_environment(small_scenario(5, kLight));
    const auto out = run_transaction(env, SensorKind::Light);
    ASSERT_EQ(out.status, OutcomeStatus::Stored);
    ASSERT_TRUE(out.triple.has_value());
    EXPECT_EQ(env.store().size(), 3u);
    const auto joined = join_triples(env.store(), SensorKind::Light);
    ASSERT_EQ(joined.size(), 1u);
    EXPECT_EQ(joined[0], *out.triple);
}

TEST(RunTransaction, CorruptedResponseIdStoresNothing) {
    auto env = make_emulated_environment(small_scenario(5, kLight));
    const auto out = run_transaction(env, SensorKind::Light, 500, FaultKind::CorruptResponseId);
    EXPECT_EQ(out.status, OutcomeStatus::DiscardedInconsistent);
    EXPECT_FALSE(out.triple.has_value());
    EXPECT_TRUE(env.store().empty());
    // The devices hold nothing back for a later transaction.
    EXPECT_EQ(run_transaction(env, SensorKind::Light).status, OutcomeStatus::Stored);
    EXPECT_EQ(env.store().size(), 3u);
}

TEST(RunTransaction, CorruptPayloadStoresNothing) {
    auto env = make_emulated_environment(small_scenario(5, kLight));
    EXPECT_EQ(run_transaction(env, SensorKind::Light, 500, FaultKind::CorruptPayload).status,
              OutcomeStatus::DiscardedInconsistent);
    EXPECT_TRUE(env.store().empty());
}

TEST(RunTransaction, DroppedBroadcastNeverJoins) {
    auto env = make_emulated_environment(small_scenario(5, kLight));
    const auto out = run_transaction(env, SensorKind::Light, 500, FaultKind::DropDtiBroadcast);
    EXPECT_EQ(out.status, OutcomeStatus::DiscardedIncomplete);
    EXPECT_EQ(env.store().size(), 2u);
    EXPECT_TRUE(join_triples(env.store(), SensorKind::Light).empty());
}

TEST(RunTransaction, ShorterRecordingWindow) {
    auto env = make_emulated_environment(small_scenario(5, {SensorKind::Gyroscope}));
    const auto out = run_transaction(env, SensorKind::Gyroscope, 200);
    ASSERT_EQ(out.status, OutcomeStatus::Stored);
    for (auto r : kAllRoles)
        for (const auto& s : out.triple->trace(r).samples()) EXPECT_LT(s.t_ms, 200.0);
}

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

TEST(RunSession, TwoSensorsThreeEach) {
    const std::vector<SensorKind> sensors{SensorKind::Light, SensorKind::Gravity};
    auto env = make_emulated_environment(small_scenario(3, sensors));
    const auto stats = run_session(env, sensors, 3);
    EXPECT_EQ(stats.attempted, 6u);
    EXPECT_EQ(stats.stored, 6u);
    EXPECT_EQ(join_triples(env.store(), SensorKind::Light).size(), 3u);
    EXPECT_EQ(join_triples(env.store(), SensorKind::Gravity).size(), 3u);
}

TEST(RunSession, ThousandTransactionsOneSensor) {
    auto env = make_emulated_environment(small_scenario(1000, kLight));
    const auto stats = run_session(env, kLight, 1000);
    EXPECT_EQ(stats.stored, 1000u);
    EXPECT_EQ(join_triples(env.store(), SensorKind::Light).size(), 1000u);
}

TEST(RunSession, FaultsAreConservedAndStoredTriplesValidate) {
    const std::vector<SensorKind> sensors{SensorKind::Light, SensorKind::Accelerometer};
    auto env = make_emulated_environment(small_scenario(250, sensors));
    const auto faults = FaultSchedule::random(500, 0.1, 11);
    const auto stats = run_session(env, sensors, 250, faults);
    EXPECT_EQ(stats.attempted, 500u);
    EXPECT_EQ(stats.stored + stats.discarded(), 500u);
    EXPECT_EQ(stats.discarded(), faults.size());
    std::size_t drops = 0;
    for (const auto& [i, k] : faults.entries()) drops += k == FaultKind::DropDtiBroadcast;
    EXPECT_EQ(stats.discarded_incomplete, drops);
    std::size_t joined = 0;
    for (auto s : sensors) joined += join_triples(env.store(), s).size();
    EXPECT_EQ(joined, stats.stored);
}

TEST(RunSession, MatchesGeneratedDataset) {
    const std::vector<SensorKind> sensors{SensorKind::MagneticField, SensorKind::RotationVector};
    const auto scenario = small_scenario(8, sensors);
    auto env = make_emulated_environment(scenario);
    run_session(env, sensors, 8);
    const auto data = generate_dataset(scenario);
    for (std::size_t si = 0; si < sensors.size(); ++si) {
        const auto joined = join_triples(env.store(), sensors[si]);
        ASSERT_EQ(joined.size(), 8u);
        for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(joined[k], data[si * 8 + k]);
    }
}

TEST(RunSession, ConfigErrors) {
    auto env = make_emulated_environment(small_scenario(3, kLight));
    EXPECT_THROW(run_session(env, kLight, 0), ConfigError);
    EXPECT_THROW(run_session(env, std::span<const SensorKind>{}, 3), ConfigError);
}

// ---------------------------------------------------------------------------
// Live mode over loopback UDP
// ---------------------------------------------------------------------------

TEST(LiveMode, SameResultsAsEmulated) {
    const std::vector<SensorKind> sensors{SensorKind::Light, SensorKind::Gyroscope};
    const auto scenario = small_scenario(5, sensors);
    auto emu = make_emulated_environment(scenario);
    auto live = live_mode_bind(scenario, 0);
    ASSERT_TRUE(live.live());
    ASSERT_TRUE(live.broadcast_port().has_value());
    EXPECT_NE(*live.broadcast_port(), 0);
    run_session(emu, sensors, 5);
    const auto stats = run_session(live, sensors, 5);
    EXPECT_EQ(stats.stored, 10u);
    EXPECT_EQ(all_traces(live), all_traces(emu));
}

TEST(LiveMode, PortInUseIsABindError) {
    const auto scenario = small_scenario(2, kLight);
    auto first = live_mode_bind(scenario, 0);
    const auto port = *first.broadcast_port();
    EXPECT_THROW(live_mode_bind(scenario, port), BindError);
}

TEST(LiveMode, CorruptResponseIsDiscardedAndSessionContinues) {
    auto env = live_mode_bind(small_scenario(6, kLight), 0);
    FaultSchedule f;
    f.set(1, FaultKind::CorruptPayload);
    f.set(3, FaultKind::CorruptResponseId);
    const auto stats = run_session(env, kLight, 6, f);
    EXPECT_EQ(stats.stored, 4u);
    EXPECT_EQ(stats.discarded_inconsistent, 2u);
    EXPECT_EQ(join_triples(env.store(), SensorKind::Light).size(), 4u);
}

TEST(LiveMode, DistantInstrumentSurvivesGarbageDatagrams) {
    auto env = live_mode_bind(small_scenario(3, kLight), 0);
    const auto sender = detail::UdpSocket::bind_loopback(0);
    const auto to = detail::UdpSocket::loopback(*env.broadcast_port());
    const std::uint8_t junk1[] = {0xff};
    const std::uint8_t junk2[64] = {};
    sender.send_to(junk1, to);
    sender.send_to(junk2, to);
    sender.send_to(ProtocolMessage{id_from(42), SensorKind::Light}.encode(), to);
    const auto stats = run_session(env, kLight, 3);
    EXPECT_EQ(stats.stored, 3u);
}
