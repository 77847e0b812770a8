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

#include "kadrtc/node_id.hpp"

#include <openssl/sha.h>

#include <bit>
#include <cstring>
#include <stdexcept>

namespace kadrtc {

node_id node_id::from_sha1(std::string_view data)
{
	std::array<std::uint8_t, size> digest;
	static_assert(SHA_DIGEST_LENGTH == size);
	SHA1(reinterpret_cast<unsigned char const*>(data.data()), data.size(), digest.data());
	return node_id(digest);
}

node_id node_id::random(rng& r)
{
	std::array<std::uint8_t, size> b;
	for (std::size_t i = 0; i < size; i += 4)
	{
		std::uint64_t const v = r.next();
		for (std::size_t j = 0; j < 4; ++j) b[i + j] = std::uint8_t(v >> (8 * j));
	}
	return node_id(b);
}

std::optional<node_id> node_id::from_hex(std::string_view hex)
{
	if (hex.size() != size * 2) return std::nullopt;
	auto nibble = [](char c) -> int {
		if (c >= '0' && c <= '9') return c - '0';
		if (c >= 'a' && c <= 'f') return c - 'a' + 10;
		return -1;
	};
	std::array<std::uint8_t, size> b;
	for (std::size_t i = 0; i < size; ++i)
	{
		int const hi = nibble(hex[2 * i]);
		int const lo = nibble(hex[2 * i + 1]);
		if (hi < 0 || lo < 0) return std::nullopt;
		b[i] = std::uint8_t(hi << 4 | lo);
	}
	return node_id(b);
}

node_id node_id::from_uint(std::uint64_t v)
{
	std::array<std::uint8_t, size> b{};
	for (std::size_t i = 0; i < 8; ++i) b[size - 1 - i] = std::uint8_t(v >> (8 * i));
	return node_id(b);
}

node_id node_id::power_of_two(int bit)
{
	if (bit < 0 || bit >= bits) throw std::out_of_range("node_id::power_of_two");
	std::array<std::uint8_t, size> b{};
	b[size - 1 - bit / 8] = std::uint8_t(1u << (bit % 8));
	return node_id(b);
}

std::string node_id::to_hex() const
{
	static char const digits[] = "0123456789abcdef";
	std::string out(size * 2, '0');
	for (std::size_t i = 0; i < size; ++i)
	{
		out[2 * i] = digits[m_bytes[i] >> 4];
		out[2 * i + 1] = digits[m_bytes[i] & 0xf];
	}
	return out;
}

bool node_id::is_zero() const
{
	for (auto b : m_bytes) if (b) return false;
	return true;
}

bool node_id::bit(int i) const
{
	return (m_bytes[size - 1 - i / 8] >> (i % 8)) & 1;
}

int node_id::highest_bit() const
{
	for (std::size_t i = 0; i < size; ++i)
	{
		if (m_bytes[i] == 0) continue;
		int const top = 7 - std::countl_zero(m_bytes[i]);
		return int((size - 1 - i) * 8) + top;
	}
	return -1;
}

node_id node_id::operator^(node_id const& o) const
{
	std::array<std::uint8_t, size> b;
	for (std::size_t i = 0; i < size; ++i) b[i] = m_bytes[i] ^ o.m_bytes[i];
	return node_id(b);
}

int bucket_index(node_id const& owner, node_id const& other)
{
	int const i = distance(owner, other).highest_bit();
	if (i < 0) throw std::invalid_argument("bucket_index: identical node ids");
	return i;
}

node_id random_id_in_bucket(node_id const& owner, int index, rng& r)
{
	if (index < 0 || index >= node_id::bits) throw std::out_of_range("random_id_in_bucket");
	auto bytes = node_id::random(r).bytes();
	// keep the low `index` bits random, force bit `index`, clear the rest
	int const byte = int(node_id::size) - 1 - index / 8;
	for (int i = 0; i < byte; ++i) bytes[i] = 0;
	std::uint8_t const top = std::uint8_t(1u << (index % 8));
	bytes[byte] = std::uint8_t((bytes[byte] & (top - 1)) | top);
	return owner ^ node_id(bytes);
}

std::size_t node_id_hash::operator()(node_id const& id) const noexcept
{
	std::size_t h;
	std::memcpy(&h, id.bytes().data(), sizeof(h));
	return h;
}

} // namespace kadrtc
