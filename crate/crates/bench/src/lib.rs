//! Benchmarks for the sampler, posterior and k-means baseline; see `benches/`.
