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

#include "kadrtc/random.hpp"

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace kadrtc {

// A 160-bit identifier. Bytes are stored big-endian: byte 0 holds bits
// 159..152, so lexicographic byte order equals integer order.
class node_id
{
public:
	static constexpr std::size_t size = 20;
	static constexpr int bits = 160;

	constexpr node_id() = default;
	explicit node_id(std::array<std::uint8_t, size> const& bytes) : m_bytes(bytes) {}

	static node_id from_sha1(std::string_view data);
	static node_id random(rng& r);
	// nullopt unless exactly 40 lowercase hex characters
	static std::optional<node_id> from_hex(std::string_view hex);
	// small integer in the low 64 bits; used by tests and examples
	static node_id from_uint(std::uint64_t v);
	// the value 2^bit
	static node_id power_of_two(int bit);

	std::string to_hex() const;

	bool is_zero() const;
	bool bit(int i) const;
	// index of the most significant set bit, -1 for zero
	int highest_bit() const;

	node_id operator^(node_id const& o) const;

	std::uint8_t operator[](std::size_t i) const { return m_bytes[i]; }
	std::array<std::uint8_t, size> const& bytes() const { return m_bytes; }

	friend auto operator<=>(node_id const&, node_id const&) = default;

private:
	std::array<std::uint8_t, size> m_bytes{};
};

// XOR distance, interpreted as an unsigned 160-bit integer.
inline node_id distance(node_id const& a, node_id const& b) { return a ^ b; }

// floor(log2(distance(owner, other))). Throws std::invalid_argument when
// the ids are equal; a node never routes to itself.
int bucket_index(node_id const& owner, node_id const& other);

// A uniformly random id whose distance from `owner` falls in
// [2^index, 2^(index+1)).
node_id random_id_in_bucket(node_id const& owner, int index, rng& r);

struct node_id_hash
{
	std::size_t operator()(node_id const& id) const noexcept;
};

} // namespace kadrtc
