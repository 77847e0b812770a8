/*
Copyright 2026 The kadrtc Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <cstdint>
#include <random>

namespace kadrtc {

// Seeded generator with distribution helpers that do not depend on the
// standard library's (implementation-defined) distribution algorithms, so
// that identical seeds give identical streams on every platform.
class rng
{
public:
	explicit rng(std::uint64_t seed = 1) : m_engine(seed) {}

	std::uint64_t next() { return m_engine(); }

	// uniform in [0, bound), bound > 0
	std::uint64_t uniform(std::uint64_t bound)
	{
		std::uint64_t const limit = ~std::uint64_t(0) - (~std::uint64_t(0) % bound);
		std::uint64_t v;
		do v = m_engine(); while (v >= limit);
		return v % bound;
	}

	// uniform in [lo, hi]
	std::int64_t uniform_int(std::int64_t lo, std::int64_t hi)
	{
		return lo + static_cast<std::int64_t>(uniform(static_cast<std::uint64_t>(hi - lo) + 1));
	}

	// uniform in [0, 1)
	double uniform_real()
	{
		return static_cast<double>(m_engine() >> 11) * 0x1.0p-53;
	}

	bool bernoulli(double p)
	{
		if (p <= 0.0) return false;
		if (p >= 1.0) return true;
		return uniform_real() < p;
	}

	// derive an independent stream, e.g. one per simulated node
	std::uint64_t fork_seed() { return splitmix(next()); }

	static std::uint64_t splitmix(std::uint64_t x)
	{
		x += 0x9e3779b97f4a7c15ULL;
		x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
		x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
		return x ^ (x >> 31);
	}

private:
	std::mt19937_64 m_engine;
};

} // namespace kadrtc
