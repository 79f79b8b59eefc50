#include <gtest/gtest.h>

#include "ecodrive/policy_io.hpp"
#include "test_util.hpp"

using namespace ecodrive;

namespace {

DeployablePolicy sample_policy()
{
    PolicyTable pi(ObservationKind::AV);
    Rng rng(4);
    std::unordered_map<std::uint32_t, std::uint64_t> visits;
    for (int k = 0; k < 50; ++k) {
        const auto o = static_cast<std::uint32_t>(uniform_int(rng, 0, 1594322));
        ActionRow r{};
        double sum = 0.0;
        for (auto& p : r) sum += p = uniform01(rng);
        for (auto& p : r) p /= sum;
        pi.set_row(o, r);
        visits[o] = static_cast<std::uint64_t>(uniform_int(rng, 1, 100));
    }
    return DeployablePolicy(std::move(pi), std::move(visits), 40);
}

const std::string kHeader =
    "ecodrive_policy,1\nkind,levelk\nn_actions,7\nfallback_n,20\nthreshold_hash,00000000000000ff\n"
    "state_index,p0,p1,p2,p3,p4,p5,p6,k_visits\n";

}  // namespace

TEST(PolicyFile, RoundTripIsBitIdentical)
{
    const auto policy = sample_policy();
    const auto text = policy_csv(policy, 0xabcdef0123456789ULL);
    const auto loaded = parse_policy_csv(text, "mem");
    EXPECT_EQ(loaded.header.kind, ObservationKind::AV);
    EXPECT_EQ(loaded.header.fallback_n, 40);
    EXPECT_EQ(loaded.header.threshold_hash, 0xabcdef0123456789ULL);
    EXPECT_EQ(loaded.policy.visited_states(), policy.visited_states());
    for (auto o : policy.learned().sorted_states()) {
        EXPECT_EQ(loaded.policy.learned().row(o), policy.learned().row(o));
        EXPECT_EQ(loaded.policy.visits(o), policy.visits(o));
    }
    EXPECT_EQ(policy_csv(loaded.policy, 0xabcdef0123456789ULL), text);
}

TEST(PolicyFile, RowsSortedByState)
{
    const auto text = policy_csv(sample_policy(), 0);
    std::istringstream in(text);
    std::string line;
    for (int i = 0; i < 6; ++i) std::getline(in, line);
    long long prev = -1;
    while (std::getline(in, line)) {
        const long long o = std::stoll(line.substr(0, line.find(',')));
        EXPECT_GT(o, prev);
        prev = o;
    }
}

TEST(PolicyFile, EmptyPolicy)
{
    const auto loaded = parse_policy_csv(kHeader, "mem");
    EXPECT_EQ(loaded.policy.visited_states(), 0u);
    EXPECT_EQ(loaded.policy.kind(), ObservationKind::LevelK);
    EXPECT_EQ(loaded.policy.row(8), one_hot(Action::HardDecelerate));
}

TEST(PolicyFile, SaveAndLoad)
{
    const auto path = (testutil::scratch_dir() / "p.csv").string();
    save_policy(path, sample_policy(), 7);
    EXPECT_EQ(load_policy(path).header.threshold_hash, 7u);
}

TEST(PolicyFile, RejectsMalformedContent)
{
    const std::string row_ok = "3,0.5,0.5,0,0,0,0,0,4\n";
    EXPECT_NO_THROW(parse_policy_csv(kHeader + row_ok, "mem"));
    EXPECT_THROW(parse_policy_csv("ecodrive_policy,2\n" + kHeader.substr(kHeader.find('\n') + 1), "mem"), DataError);
    EXPECT_THROW(parse_policy_csv(kHeader + "3,0.5,0.6,0,0,0,0,0,4\n", "mem"), DataError);
    EXPECT_THROW(parse_policy_csv(kHeader + "3,1.5,-0.5,0,0,0,0,0,4\n", "mem"), DataError);
    EXPECT_THROW(parse_policy_csv(kHeader + "177147,1,0,0,0,0,0,0,4\n", "mem"), DataError);
    EXPECT_THROW(parse_policy_csv(kHeader + "3,1,0,0,0,0,0,4\n", "mem"), DataError);
    EXPECT_THROW(parse_policy_csv(kHeader + "3,x,0,0,0,0,0,0,4\n", "mem"), DataError);
    EXPECT_THROW(parse_policy_csv("kind,levelk\n", "mem"), DataError);
    std::string bad_kind = kHeader;
    bad_kind.replace(bad_kind.find("levelk"), 6, "robot");
    EXPECT_THROW(parse_policy_csv(bad_kind, "mem"), DataError);
}

TEST(PolicyFile, DiagnosticNamesFileAndField)
{
    try {
        parse_policy_csv(kHeader + "3,0.5,0.6,0,0,0,0,0,4\n", "policy.csv");
        FAIL();
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("policy.csv"), std::string::npos);
        EXPECT_NE(msg.find("row 1"), std::string::npos);
    }
}

TEST(Checkpoint, LearnerRoundTrip)
{
    JaakkolaLearner a(ObservationKind::LevelK, LearnerConfig{});
    Rng rng(6);
    for (int ep = 0; ep < 5; ++ep) {
        a.begin_episode();
        for (int k = 0; k < 30; ++k) {
            const auto o = static_cast<std::uint32_t>(uniform_int(rng, 0, 200));
            a.learn(o, a.act(o, rng), uniform_real(rng, -5.0, 5.0));
        }
    }
    a.begin_episode();
    const auto j = learner_to_json(a);
    JaakkolaLearner b(ObservationKind::LevelK, LearnerConfig{});
    learner_from_json(b, Json::parse(j.dump()), "mem");
    EXPECT_EQ(learner_to_json(b), j);
    EXPECT_EQ(b.average().mean, a.average().mean);

    JaakkolaLearner wrong(ObservationKind::AV, LearnerConfig{});
    EXPECT_THROW(learner_from_json(wrong, j, "mem"), DataError);
}
