#include <benchmark/benchmark.h>

#include "upstage/pil.hpp"

using namespace upstage;

namespace {

pil::WireMessage message(std::size_t n) {
    pil::WireMessage m;
    m.type = pil::MsgType::Sensor;
    m.tick = 12345;
    for (std::size_t i = 0; i < n; ++i) m.values.push_back(0.001 * static_cast<double>(i));
    return m;
}

void BM_Encode(benchmark::State& st) {
    const auto m = message(static_cast<std::size_t>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(pil::encode(m));
}
BENCHMARK(BM_Encode)->Arg(16)->Arg(64);

void BM_Decode(benchmark::State& st) {
    const auto bytes = pil::encode(message(static_cast<std::size_t>(st.range(0))));
    for (auto _ : st) benchmark::DoNotOptimize(pil::decode(bytes));
    st.SetBytesProcessed(static_cast<std::int64_t>(st.iterations() * bytes.size()));
}
BENCHMARK(BM_Decode)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
