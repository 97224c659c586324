#include <set>
#include <string>

#include <gtest/gtest.h>

#include "gppf/feeder.hpp"
#include "gppf/synthetic.hpp"

#include "fixtures.hpp"

using namespace gppf;

namespace {

void expect_same_structure(const Feeder& a, const Feeder& b) {
    ASSERT_EQ(a.buses().size(), b.buses().size());
    ASSERT_EQ(a.lines().size(), b.lines().size());
    ASSERT_EQ(a.loads().size(), b.loads().size());
    ASSERT_EQ(a.ders().size(), b.ders().size());
    EXPECT_EQ(a.nodes(), b.nodes());
    for (std::size_t i = 0; i < a.buses().size(); ++i) {
        EXPECT_EQ(a.buses()[i].id, b.buses()[i].id);
        EXPECT_EQ(a.buses()[i].phases, b.buses()[i].phases);
    }
    for (std::size_t i = 0; i < a.lines().size(); ++i) {
        EXPECT_EQ(a.lines()[i].from_bus, b.lines()[i].from_bus);
        EXPECT_EQ(a.lines()[i].to_bus, b.lines()[i].to_bus);
        EXPECT_TRUE(a.lines()[i].impedance.isApprox(b.lines()[i].impedance, 1e-8));
    }
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
    const auto pos = s.find(from);
    EXPECT_NE(pos, std::string::npos) << from;
    return s.replace(pos, from.size(), to);
}

}  // namespace

TEST(FeederParse, SmallFeederDimensions) {
    const Feeder f = fixtures::small();
    EXPECT_EQ(f.dim(), 3 + 3 + 2 + 1);
    EXPECT_EQ(f.source().bus, "sub");
    EXPECT_EQ(f.buses()[2].v_min, 0.9);
    EXPECT_EQ(f.loads()[2].loadshape, "*");
    ASSERT_TRUE(f.ders()[1].q_setpoint_kvar.has_value());
    EXPECT_DOUBLE_EQ(*f.ders()[1].q_setpoint_kvar, 2.5);
    // Diagonal shorthand expands to a diagonal matrix.
    EXPECT_EQ(f.lines()[1].impedance(0, 1), std::complex<double>(0.0, 0.0));
    EXPECT_EQ(f.lines()[1].impedance(2, 2), std::complex<double>(0.2, 0.4));
}

TEST(FeederParse, FlattenIndexIsBfsOrderThenPhase) {
    const Feeder f = fixtures::small();
    const std::vector<PhaseNode> expect{{"t1", Phase::a}, {"t1", Phase::b}, {"t1", Phase::c},
                                        {"t2", Phase::a}, {"t2", Phase::b}, {"t2", Phase::c},
                                        {"l1", Phase::a}, {"l1", Phase::c}, {"l2", Phase::c}};
    EXPECT_EQ(flatten_index(f), expect);
}

TEST(FeederParse, FlattenIndexIsBijection) {
    const Feeder f = make_ieee123_style_feeder();
    std::set<std::pair<std::string, char>> seen;
    for (int i = 0; i < f.dim(); ++i) {
        const PhaseNode& n = f.nodes()[static_cast<std::size_t>(i)];
        EXPECT_TRUE(seen.insert({n.bus, phase_char(n.phase)}).second);
        EXPECT_EQ(f.node_index(f.bus_index(n.bus), n.phase), i);
    }
    int pairs = 0;
    for (const Bus& b : f.buses())
        if (b.id != f.source().bus) pairs += b.phases.size();
    EXPECT_EQ(pairs, f.dim());
    for (Phase p : kAllPhases) EXPECT_EQ(f.node_index(f.source_index(), p), -1);
}

TEST(FeederParse, RoundTripIsStructurallyIdentical) {
    const Feeder f = fixtures::small();
    const std::string text = emit_feeder(f);
    const Feeder g = load_feeder(text);
    expect_same_structure(f, g);
    EXPECT_EQ(emit_feeder(g), text);
    EXPECT_EQ(feeder_hash(f), feeder_hash(g));
}

TEST(FeederParse, RoundTripSynthetic) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Feeder f = fixtures::synthetic25(5, seed);
        const Feeder g = load_feeder(emit_feeder(f));
        expect_same_structure(f, g);
        EXPECT_EQ(emit_feeder(g), emit_feeder(f));
    }
}

TEST(FeederParse, CommentsAndBlankLines) {
    const Feeder f = load_feeder("# header\n\n[source]\nbus = s # trailing\nkv_base = 1\n[bus]\ns a\nn a\n"
                                 "[line]\ns n a 0.1+j0.2\n");
    EXPECT_EQ(f.dim(), 1);
}

TEST(FeederParse, ParseErrorsCarryLineNumbers) {
    try {
        load_feeder("[source]\nbus = s\n[bus]\ns a\nn q\n");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 5u);
        EXPECT_EQ(e.kind(), "parse");
    }
    EXPECT_THROW(load_feeder("[source]\nbus = s\n[bus]\ns a\nn a\n[line]\ns n a 0.1+j0.2 0.3\n"), ParseError);
    EXPECT_THROW(load_feeder("[source]\nbus = s\n[widgets]\n"), ParseError);
    EXPECT_THROW(load_feeder("[bus]\ns a\n"), ParseError);
    EXPECT_THROW(load_feeder("[source]\nbus = s\n[bus]\ns a\nn a\n[line]\ns n a 0.1+j0.2\n[load]\nn a ten 1\n"),
                 ParseError);
}

TEST(FeederValidate, CycleIsNotRadial) {
    const std::string text = replace(fixtures::kSmallFeeder, "l1 l2 c 0.6+j0.35", "l1 l2 c 0.6+j0.35\nt2 l2 c 0.2+j0.1");
    try {
        load_feeder(text);
        FAIL() << "expected a validation error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("not radial"), std::string::npos) << e.what();
    }
}

TEST(FeederValidate, LineIntoSourceIsNotRadial) {
    const std::string text = replace(fixtures::kSmallFeeder, "t1 t2 abc", "t2 sub abc");
    try {
        load_feeder(text);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("not radial"), std::string::npos) << e.what();
    }
}

TEST(FeederValidate, StructuralErrors) {
    const std::string base = fixtures::kSmallFeeder;
    EXPECT_THROW(load_feeder(replace(base, "l2 c\n", "l2 c\nt1 abc\n")), ValidationError);  // duplicate id
    EXPECT_THROW(load_feeder(replace(base, "l1 l2 c 0.6+j0.35", "l1 l2 b 0.6+j0.35")), ValidationError);
    EXPECT_THROW(load_feeder(replace(base, "l1 l2 c 0.6+j0.35", "l1 l2 c 0+j0.35")), ValidationError);
    EXPECT_THROW(load_feeder(replace(base, "l2 c 25 10", "l2 a 25 10")), ValidationError);
    EXPECT_THROW(load_feeder(replace(base, "l2 c 25 10", "zz c 25 10")), ValidationError);
    EXPECT_THROW(load_feeder(replace(base, "l1 a 10 2.5", "l1 ac 10 2.5")), ValidationError);
    EXPECT_THROW(load_feeder(replace(base, "l1 a 10 2.5", "sub a 10 2.5")), ValidationError);
    EXPECT_THROW(load_feeder(replace(base, "kva_base = 1000", "kva_base = 0")), ValidationError);
    EXPECT_THROW(load_feeder(replace(base, "bus = sub", "bus = nowhere")), ValidationError);
}

TEST(FeederValidate, PhaseSubsetAlongPath) {
    // A child bus cannot carry a phase its feeding line lacks.
    const std::string text = replace(fixtures::kSmallFeeder, "l2 c\n", "l2 ac\n");
    EXPECT_THROW(load_feeder(text), ValidationError);
}

TEST(FeederDerived, PerUnitImpedance) {
    const Feeder f = fixtures::small();
    const double zb = 2.40177712 * 2.40177712 * 1000.0 / 1000.0;
    EXPECT_NEAR(f.z_base(), zb, 1e-12);
    EXPECT_NEAR(std::abs(f.impedance_pu(1)(0, 0) - std::complex<double>(0.2, 0.4) / zb), 0.0, 1e-15);
}

TEST(FeederDerived, DepthAndParents) {
    const Feeder f = fixtures::small();
    EXPECT_EQ(f.depth(f.source_index()), 0);
    EXPECT_EQ(f.depth(f.bus_index("l2")), 3);
    EXPECT_EQ(f.parent_line(f.source_index()), -1);
    EXPECT_EQ(f.line_from(f.parent_line(f.bus_index("l2"))), f.bus_index("l1"));
}

TEST(Synthetic, IsRadialAndDeterministic) {
    for (PhaseMix mix : {PhaseMix::single, PhaseMix::three, PhaseMix::mixed}) {
        SyntheticFeederSpec s;
        s.buses = 40;
        s.phase_mix = mix;
        s.ders = 6;
        s.seed = 9;
        const Feeder f = generate_synthetic_feeder(s);
        EXPECT_EQ(f.lines().size() + 1, f.buses().size());
        // Every non-source bus has exactly one feeding line and a finite depth.
        for (int b = 0; b < static_cast<int>(f.buses().size()); ++b) {
            if (b == f.source_index()) continue;
            EXPECT_GE(f.parent_line(b), 0);
            EXPECT_EQ(f.depth(b), f.depth(f.line_from(f.parent_line(b))) + 1);
        }
        EXPECT_EQ(emit_feeder(f), emit_feeder(generate_synthetic_feeder(s)));
        EXPECT_EQ(f.ders().size(), 6u);
    }
}

TEST(Synthetic, PhaseMixes) {
    SyntheticFeederSpec s;
    s.buses = 30;
    s.phase_mix = PhaseMix::three;
    EXPECT_EQ(generate_synthetic_feeder(s).dim(), 29 * 3);
    s.phase_mix = PhaseMix::single;
    EXPECT_EQ(generate_synthetic_feeder(s).dim(), 29);
}

TEST(Synthetic, LeavesPlacementLoadsOnlyLeaves) {
    SyntheticFeederSpec s;
    s.buses = 60;
    s.phase_mix = PhaseMix::three;
    s.load_placement = LoadPlacement::leaves;
    s.seed = 1;
    const Feeder f = generate_synthetic_feeder(s);
    for (const LoadPoint& ld : f.loads()) EXPECT_TRUE(f.child_lines(f.bus_index(ld.bus)).empty()) << ld.bus;
    EXPECT_FALSE(f.loads().empty());
}

TEST(Synthetic, Ieee123StyleShape) {
    const Feeder f = make_ieee123_style_feeder();
    EXPECT_EQ(f.buses().size(), 123u);
    EXPECT_EQ(f.dim(), 278);
    int count[3] = {0, 0, 0};
    for (const PhaseNode& n : f.nodes()) ++count[static_cast<int>(n.phase)];
    EXPECT_EQ(count[0], 99);
    EXPECT_EQ(count[1], 84);
    EXPECT_EQ(count[2], 95);
    EXPECT_EQ(f.ders().size(), 20u);
}

TEST(Synthetic, LargeThreePhase) {
    SyntheticFeederSpec s;
    s.buses = 3000;
    s.phase_mix = PhaseMix::three;
    s.seed = 1;
    const Feeder f = generate_synthetic_feeder(s);
    EXPECT_EQ(f.dim(), 2999 * 3);
    EXPECT_EQ(f.lines().size(), 2999u);
}

TEST(Synthetic, RejectsBadSpecs) {
    SyntheticFeederSpec s;
    s.buses = 1;
    EXPECT_THROW(generate_synthetic_feeder(s), ArgumentError);
    EXPECT_THROW(parse_phase_mix("four"), ArgumentError);
}
