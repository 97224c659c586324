#pragma once

#include <string>

#include "gppf/feeder.hpp"
#include "gppf/synthetic.hpp"

namespace fixtures {

// Zbase = 1 ohm and 1000 kVA per phase, so ohms and MW read directly as p.u.
inline std::string two_bus_text(double r, double x, double kw, double kvar) {
    return "[source]\nbus = s\nkv_base = 1\nkva_base = 1000\nv_mag = 1\n"
           "[bus]\ns a\nn a\n"
           "[line]\ns n a " + gppf::format_number(r) + "+j" + gppf::format_number(x) + "\n"
           "[load]\nn a " + gppf::format_number(kw) + " " + gppf::format_number(kvar) + " industrial\n";
}

inline gppf::Feeder two_bus(double r, double x, double kw, double kvar) {
    return gppf::load_feeder(two_bus_text(r, x, kw, kvar));
}

// Three-phase source, a three-phase trunk with mutual coupling, a two-phase
// lateral and a single-phase tap.
inline const char* kSmallFeeder = R"(# small test feeder
[source]
bus = sub
kv_base = 2.40177712
kva_base = 1000
v_mag = 1.0 1.0 1.0

[bus]
sub abc
t1 abc
t2 abc 0.9 1.1
l1 ac
l2 c

[line]
sub t1 abc 0.3465+j1.0179 0.1560+j0.5017 0.1580+j0.4236 0.1560+j0.5017 0.3375+j1.0478 0.1535+j0.3849 0.1580+j0.4236 0.1535+j0.3849 0.3414+j1.0348
t1 t2 abc 0.2+j0.4 0.2+j0.4 0.2+j0.4
t1 l1 ac 0.5+j0.3 0.1+j0.05 0.1+j0.05 0.5+j0.3
l1 l2 c 0.6+j0.35

[load]
t1 a 40 15 residential
t1 b 35 12 commercial
t2 c 50 20
l1 a 20 8 *
l2 c 25 10 industrial

[der]
t2 abc 30
l1 a 10 2.5
)";

inline gppf::Feeder small() { return gppf::load_feeder(kSmallFeeder); }

inline gppf::Feeder synthetic25(int ders = 10, std::uint64_t seed = 7) {
    gppf::SyntheticFeederSpec s;
    s.buses = 25;
    s.ders = ders;
    s.seed = seed;
    return gppf::generate_synthetic_feeder(s);
}

}  // namespace fixtures
