#include <benchmark/benchmark.h>

#include "upstage/plant.hpp"

using namespace upstage;

namespace {

plant::PlantConfig config(bool slosh) {
    plant::PlantConfig c;
    c.m_dry = 900.0;
    c.J_dry = Vec3(1100.0, 1150.0, 1500.0).asDiagonal();
    c.w0 = Vec3(0.004, -0.003, 3.0 * kDeg);
    c.m_prop = 300.0;
    c.m_gas = 2.0;
    c.V_tank = 0.5;
    c.R_t = 0.8;
    c.z_b = -0.3;
    c.zeta = 0.1;
    if (!slosh) c.params.slosh_model = plant::SloshModel::None;
    return c;
}

void BM_StepDynamics(benchmark::State& st) {
    const plant::PlantConfig c = config(st.range(0) != 0);
    plant::VehicleState s = plant::make_initial_state(c);
    const plant::PlantInputs in{Vec3(1.0, -0.5, 0.2), Vec3::Zero(), 0.0};
    for (auto _ : st) {
        s = plant::step_dynamics(s, in, 0.01, c.params);
        benchmark::DoNotOptimize(s);
    }
}
BENCHMARK(BM_StepDynamics)->Arg(0)->Arg(1)->ArgName("slosh");

}  // namespace

BENCHMARK_MAIN();
