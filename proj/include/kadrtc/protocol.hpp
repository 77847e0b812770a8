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

#include "kadrtc/endpoint.hpp"
#include "kadrtc/node_id.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace kadrtc {

// 65,507 bytes is the largest payload a UDP/IPv4 datagram can carry.
inline constexpr std::size_t max_datagram_size = 65507;
inline constexpr std::size_t max_value_size = 8 * 1024;
inline constexpr std::size_t max_envelope_size = 64 * 1024;

enum class rpc_kind : std::uint8_t
{
	ping,
	pong,
	store,
	store_ok,
	find_node,
	find_value,
	nodes,
	value,
	signal_relay,
	relay_ok,
	relay_fail,
};

char const* to_string(rpc_kind k);
std::optional<rpc_kind> rpc_kind_from_string(std::string_view s);
bool is_request(rpc_kind k);
// true if `response` is a legal answer to `request`
bool answers(rpc_kind request, rpc_kind response);

struct peer_info
{
	node_id id;
	endpoint address;

	friend bool operator==(peer_info const&, peer_info const&) = default;
};

struct empty_body
{
	friend bool operator==(empty_body const&, empty_body const&) = default;
};

struct store_body
{
	node_id key;
	std::string value;  // opaque bytes, hex on the wire
	std::uint32_t ttl_s = 0;

	friend bool operator==(store_body const&, store_body const&) = default;
};

struct find_body
{
	node_id target;

	friend bool operator==(find_body const&, find_body const&) = default;
};

struct nodes_body
{
	std::vector<peer_info> contacts;

	friend bool operator==(nodes_body const&, nodes_body const&) = default;
};

struct value_entry
{
	std::string value;
	node_id publisher;
	std::uint32_t ttl_s = 0;  // remaining lifetime at the responder

	friend bool operator==(value_entry const&, value_entry const&) = default;
};

struct value_body
{
	std::vector<value_entry> values;

	friend bool operator==(value_body const&, value_body const&) = default;
};

struct signal_relay_body
{
	node_id dest_peer_key;
	std::string envelope;  // opaque at this layer

	friend bool operator==(signal_relay_body const&, signal_relay_body const&) = default;
};

enum class relay_fail_reason : std::uint8_t { no_such_peer };

struct relay_fail_body
{
	relay_fail_reason reason = relay_fail_reason::no_such_peer;

	friend bool operator==(relay_fail_body const&, relay_fail_body const&) = default;
};

using rpc_body = std::variant<empty_body, store_body, find_body, nodes_body, value_body
	, signal_relay_body, relay_fail_body>;

struct rpc_message
{
	node_id rpc_id;
	peer_info sender;
	rpc_kind kind = rpc_kind::ping;
	rpc_body body;

	friend bool operator==(rpc_message const&, rpc_message const&) = default;
};

// The body alternative a kind carries.
rpc_body default_body(rpc_kind k);

struct encode_error : std::runtime_error
{
	using std::runtime_error::runtime_error;
};

// Canonical encoding: a JSON object with sorted keys and no insignificant
// whitespace. Throws encode_error when the message violates a size limit
// or the body does not match the kind.
std::string encode(rpc_message const& msg);

enum class decode_error : std::uint8_t
{
	malformed,
	unknown_kind,
	oversize,
};

char const* to_string(decode_error e);

struct decode_result
{
	std::optional<rpc_message> message;
	decode_error error = decode_error::malformed;

	explicit operator bool() const { return message.has_value(); }
};

// Never throws; anything that is not a canonical message is rejected.
decode_result decode(std::string_view raw);

// (kind, rpc_id hex) for trace output; ("?", "") if the datagram does not decode
std::pair<std::string, std::string> describe_datagram(std::string_view raw);

// Requests awaiting a response, keyed by rpc_id.
class pending_table
{
public:
	struct entry
	{
		rpc_kind request_kind;
		node_id peer;  // expected responder, zero when unknown
		std::uint64_t context = 0;
	};

	// false if the id is already in flight; the caller draws a new nonce
	bool insert(node_id const& rpc_id, entry e);

	// Removes and returns the entry a response answers. Unknown ids,
	// duplicates, late responses and kind mismatches yield nullopt
	// (unsolicited).
	std::optional<entry> match_response(rpc_message const& resp);

	// Removes an entry whose timeout fired; nullopt if already answered.
	std::optional<entry> expire(node_id const& rpc_id);

	bool contains(node_id const& rpc_id) const { return m_entries.count(rpc_id) > 0; }
	std::size_t size() const { return m_entries.size(); }

private:
	std::unordered_map<node_id, entry, node_id_hash> m_entries;
};

} // namespace kadrtc
