#include "cimnas/error.hpp"
#include "cimnas/search_space.hpp"
#include "cimnas/serialization.hpp"

#include "generators.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace cimnas;
using cimnas::testing::Gen;

namespace {

ActionSequence random_actions(Gen& g, const SearchSpace& s) {
    ActionSequence a;
    for (int k : s.choice_counts()) a.push_back(g.integer(0, k - 1));
    return a;
}

/// Advances `a` like an odometer over `counts`; false after the last sequence.
bool next_sequence(ActionSequence& a, const std::vector<int>& counts) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (++a[i] < counts[i]) return true;
        a[i] = 0;
    }
    return false;
}

SpaceDefinition small_definition() {
    SpaceDefinition def;
    def.name = "small";
    def.layers = {ConvChoices{{1, 3}, {3}, {2, 4, 6}, {0, 1}}, DenseChoices{{8, 16}}, OutputChoice{3}};
    def.quant = QuantChoices{{0, 1}, {2}};
    def.devices = 2;
    return def;
}

} // namespace

TEST(RlsSpace, ChoiceListsAndStepCount) {
    const SearchSpace s = rls_space();
    EXPECT_EQ(s.steps(), 59u);
    EXPECT_EQ(s.definition().layers.size(), 9u);
    const auto& conv = std::get<ConvChoices>(s.definition().layers[0]);
    EXPECT_EQ(conv.filters, (std::vector<int>{24, 36, 48, 64}));
    EXPECT_EQ(conv.filter_h, (std::vector<int>{1, 3, 5, 7}));
    EXPECT_EQ(std::get<DenseChoices>(s.definition().layers[6]).neurons, (std::vector<int>{64, 128, 256, 512}));
    EXPECT_EQ(s.definition().quant->frac_bits, (std::vector<int>{0, 1, 2, 3, 4, 5, 6}));
    EXPECT_EQ(s.definition().quant->int_bits, (std::vector<int>{0, 1, 2, 3}));
    EXPECT_EQ(s.decisions().back().kind, DecisionKind::Device);
}

TEST(RlsSpace, DecisionOrderIsLayerMajor) {
    const SearchSpace s = rls_space();
    const auto& d = s.decisions();
    const std::vector<DecisionKind> conv_layer{DecisionKind::FilterH,   DecisionKind::FilterW,    DecisionKind::Filters,
                                               DecisionKind::Pool,      DecisionKind::WeightInt,  DecisionKind::WeightFrac,
                                               DecisionKind::ActInt,    DecisionKind::ActFrac};
    for (std::size_t i = 0; i < conv_layer.size(); ++i) {
        EXPECT_EQ(d[i].kind, conv_layer[i]);
        EXPECT_EQ(d[i].layer, 0u);
    }
    EXPECT_EQ(d[48].kind, DecisionKind::Neurons);
    EXPECT_EQ(d[48].layer, 6u);
    EXPECT_EQ(d[57].layer, 7u);
}

TEST(VlsSpace, LargerThanRls) {
    const SearchSpace v = vls_space();
    EXPECT_EQ(v.definition().layers.size(), 12u);
    EXPECT_EQ(std::get<ConvChoices>(v.definition().layers[0]).filters, (std::vector<int>{128, 256, 512, 1024}));
    EXPECT_EQ(std::get<DenseChoices>(v.definition().layers[8]).neurons, (std::vector<int>{256, 512, 1024, 2048}));
    EXPECT_GT(space_size(v), space_size(rls_space()));
}

TEST(Decode, AllZeroIsTheFirstChoiceEverywhere) {
    const SearchSpace s = rls_space();
    const Candidate c = s.decode(ActionSequence(s.steps(), 0));
    EXPECT_EQ(c, s.base());
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(std::get<ConvLayer>(c.arch.layers[i]), (ConvLayer{1, 1, 24, false}));
        EXPECT_EQ((*c.quant)[i], (LayerQuantBits{0, 0, 0, 0}));
    }
    EXPECT_EQ(std::get<DenseLayer>(c.arch.layers[7]).neurons, 64);
    EXPECT_EQ(c.device, 0u);
}

TEST(Decode, RejectsBadLengthAndIndexNamingTheStep) {
    const SearchSpace s = rls_space();
    EXPECT_THROW(s.decode(ActionSequence(58, 0)), ConfigError);
    ActionSequence a(59, 0);
    a[12] = 4;
    try {
        s.decode(a);
        FAIL() << "expected rejection";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("step 12"), std::string::npos) << e.what();
    }
    a[12] = -1;
    EXPECT_THROW(s.decode(a), ConfigError);
}

TEST(Encode, ReferenceHardwareDesignRoundTrips) {
    const ArchFile f = load_arch_file(std::string(CIMNAS_PRESET_DIR) + "/arch_rls_hw.json");
    const SearchSpace s = rls_space();
    const ActionSequence a = s.encode(f.candidate);
    EXPECT_EQ(s.decode(a), f.candidate);
    EXPECT_EQ(a[0], 1); // FH 3
    EXPECT_EQ(a[1], 2); // FW 5
    EXPECT_EQ(a[2], 3); // 64 filters
    EXPECT_EQ(a[5], 6); // weight frac 6
}

TEST(Encode, RejectsValuesOutsideTheSpace) {
    const SearchSpace s = rls_space();
    Candidate c = s.base();
    std::get<ConvLayer>(c.arch.layers[2]).filters = 25;
    EXPECT_THROW(s.encode(c), ConfigError);
    c = s.base();
    (*c.quant)[0].act_frac = 7;
    EXPECT_THROW(s.encode(c), ConfigError);
    c = s.base();
    c.quant.reset();
    EXPECT_THROW(s.encode(c), ConfigError);
}

TEST(Bijection, RandomSequencesRoundTrip) {
    Gen g(11);
    const SearchSpace spaces[] = {rls_space(), vls_space(), SearchSpace(small_definition())};
    for (const auto& s : spaces) {
        for (int t = 0; t < 10000; ++t) {
            const ActionSequence a = random_actions(g, s);
            ASSERT_EQ(s.encode(s.decode(a)), a) << s.name();
        }
    }
}

TEST(Bijection, OutputLayerReusesPreviousFormats) {
    Gen g(12);
    const SearchSpace s = rls_space();
    for (int t = 0; t < 100; ++t) {
        const Candidate c = s.decode(random_actions(g, s));
        EXPECT_EQ(c.quant->back(), (*c.quant)[7]);
    }
}

TEST(SpaceSize, MatchesEnumerationOnTruncatedSpaces) {
    for (bool search_out : {false, true}) {
        SpaceDefinition def = small_definition();
        def.search_output_quant = search_out;
        const SearchSpace s(def);
        std::set<std::string> seen;
        ActionSequence a(s.steps(), 0);
        std::size_t sequences = 0;
        do {
            seen.insert(candidate_json(s.decode(a)));
            ++sequences;
        } while (next_sequence(a, s.choice_counts()));
        EXPECT_EQ(space_size(s), BigCount(sequences));
        EXPECT_EQ(seen.size(), sequences);
        EXPECT_LE(sequences, 10000u);
    }
}

TEST(SpaceSize, SingleDecisionAndDoubling) {
    SpaceDefinition one;
    one.name = "one";
    one.layers = {OutputChoice{5}};
    one.devices = 7;
    EXPECT_EQ(space_size(SearchSpace(one)), BigCount(7));

    SpaceDefinition def = small_definition();
    const BigCount before = space_size(SearchSpace(def));
    std::get<ConvChoices>(def.layers[0]).filter_w = {1, 3};
    EXPECT_EQ(space_size(SearchSpace(def)), 2 * before);
}

TEST(SpaceSize, RlsArchitectureOnlyProduct) {
    const SearchSpace s = rls_space();
    const SearchSpace arch_only = s.restricted(true, false, false, s.base());
    const BigCount four = 4, two = 2;
    // FH, FW, filter count and pool for six convolutions, then two dense widths.
    EXPECT_EQ(space_size(arch_only), pow(four, 6) * pow(four, 6) * pow(four, 6) * pow(two, 6) * (four * four));
    EXPECT_EQ(space_size(s), space_size(arch_only) * pow(BigCount(28), 16) * 2);
}

TEST(Restricted, PinsDisabledGroups) {
    Gen g(13);
    const SearchSpace s = rls_space();
    const Candidate pin = s.decode(random_actions(g, s));
    const SearchSpace quant_only = s.restricted(false, true, false, pin);
    EXPECT_EQ(quant_only.steps(), 32u);
    EXPECT_FALSE(quant_only.has_group(DecisionGroup::Architecture));
    for (int t = 0; t < 200; ++t) {
        const Candidate c = quant_only.decode(random_actions(g, quant_only));
        EXPECT_EQ(c.arch, pin.arch);
        EXPECT_EQ(c.device, pin.device);
    }
    Candidate full_precision = pin;
    full_precision.quant.reset();
    const SearchSpace nas = s.restricted(true, false, false, full_precision);
    EXPECT_EQ(nas.steps(), 26u);
    EXPECT_FALSE(nas.decode(random_actions(g, nas)).quant.has_value());
    // Quantization requested with a full-precision pin falls back to first choices.
    const SearchSpace q = s.restricted(true, true, false, full_precision);
    EXPECT_EQ(q.steps(), 58u);
    EXPECT_TRUE(q.base().quant.has_value());

    Candidate wrong = pin;
    wrong.arch.layers.pop_back();
    EXPECT_THROW(s.restricted(true, true, true, wrong), ConfigError);
}

TEST(Feasibility, DecodedCandidatesBuildOrAreFlagged) {
    Gen g(14);
    const SearchSpace s = rls_space();
    int feasible = 0;
    for (int t = 0; t < 2000; ++t) {
        const Candidate c = s.decode(random_actions(g, s));
        const std::string why = infeasibility(c, {3, 32, 32});
        if (why.empty()) {
            ++feasible;
            EXPECT_NO_THROW(infer_shapes(c.arch, {3, 32, 32}));
            EXPECT_NO_THROW((void)c.scheme());
        } else {
            bool threw = false;
            try {
                infer_shapes(c.arch, {3, 32, 32});
                (void)c.scheme();
            } catch (const Error& e) {
                threw = e.category() == ErrorCategory::Config;
            }
            EXPECT_TRUE(threw) << why;
        }
    }
    EXPECT_GT(feasible, 0);
    Candidate zero_width = s.base();
    EXPECT_FALSE(infeasibility(zero_width, {3, 32, 32}).empty());
}

TEST(SearchSpace, RejectsMalformedDefinitions) {
    SpaceDefinition def = small_definition();
    def.layers.pop_back();
    EXPECT_THROW(SearchSpace{def}, ConfigError);
    def = small_definition();
    std::get<ConvChoices>(def.layers[0]).filters.clear();
    EXPECT_THROW(SearchSpace{def}, ConfigError);
    def = small_definition();
    std::get<ConvChoices>(def.layers[0]).pool = {2};
    EXPECT_THROW(SearchSpace{def}, ConfigError);
    def = small_definition();
    def.devices = 0;
    EXPECT_THROW(SearchSpace{def}, ConfigError);
}
