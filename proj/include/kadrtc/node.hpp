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

#include "kadrtc/protocol.hpp"
#include "kadrtc/random.hpp"
#include "kadrtc/routing_table.hpp"
#include "kadrtc/transport.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace kadrtc {

struct node_config
{
	std::size_t k = 20;
	std::size_t alpha = 3;
	milliseconds rpc_timeout{2000};
	int rpc_retries = 1;
	seconds record_ttl_default{3600};
	seconds republish_interval{1800};
	seconds refresh_interval{3600};
	// 0 draws a seed from std::random_device
	std::uint64_t seed = 0;

	// throws std::invalid_argument
	void validate() const;
};

struct stored_record
{
	node_id key;
	std::string value;
	timestamp expires_at{0};
	timestamp stored_at{0};
	node_id publisher;
};

enum class lookup_status
{
	ok,
	not_joined,
	all_queries_failed,
};

char const* to_string(lookup_status s);

struct lookup_result
{
	lookup_status status = lookup_status::ok;
	// the k closest responsive contacts, ascending by distance
	std::vector<peer_info> contacts;
	int rounds = 0;
	int queried = 0;
};

enum class value_status
{
	found,
	not_found,
	not_joined,
	all_queries_failed,
};

char const* to_string(value_status s);

struct value_lookup_result
{
	value_status status = value_status::not_found;
	std::vector<value_entry> values;
	int rounds = 0;
};

struct store_result
{
	// false is StoreFailed: no replica acknowledged
	bool ok = false;
	int acks = 0;
	int rounds = 0;
};

struct join_report
{
	// false is JoinFailed: the bootstrap node never answered
	bool ok = false;
	std::size_t contacts_learned = 0;
};

enum class relay_result
{
	ok,
	no_such_peer,
	timeout,
};

struct node_stats
{
	std::uint64_t sent = 0;
	std::uint64_t received = 0;
	std::uint64_t malformed = 0;
	std::uint64_t unsolicited = 0;
	std::uint64_t timeouts = 0;
};

// The Kademlia node state machine. It talks to the world only through its
// transport, so the same code runs over UDP and over the simulator.
//
// All methods must be called from the transport's event loop. Completion
// callbacks run on that loop as well.
class node
{
public:
	// Handles an inbound SIGNAL_RELAY; returns true when the envelope was
	// handed to a live client (RELAY_OK).
	using signal_handler = std::function<bool(peer_info const& from, signal_relay_body const& body)>;

	node(node_id id, std::unique_ptr<transport> t, node_config cfg = {});
	~node();

	node(node const&) = delete;
	node& operator=(node const&) = delete;

	node_id const& id() const { return m_id; }
	endpoint const& address() const { return m_transport->local_address(); }
	peer_info self() const { return {m_id, address()}; }
	node_config const& config() const { return m_config; }
	routing_table const& table() const { return m_table; }
	routing_table& table() { return m_table; }
	transport& net() { return *m_transport; }
	node_stats const& stats() const { return m_stats; }
	rng& random() { return m_rng; }

	// Answers one request. The sender is merged into the routing table
	// first. Responses and bodies that fail validation yield nullopt.
	std::optional<rpc_message> handle_rpc(rpc_message const& msg, endpoint const& from);
	std::optional<rpc_message> handle_rpc(rpc_message const& msg) { return handle_rpc(msg, msg.sender.address); }

	void ping(endpoint const& to, std::function<void(std::optional<peer_info>)> done);

	void iterative_find_node(node_id const& target, std::function<void(lookup_result)> done);
	void iterative_find_value(node_id const& key, std::function<void(value_lookup_result)> done);

	// Replicates a value at the k closest nodes to `key`. With `republish`
	// the node re-stores it every min(republish_interval, ttl / 2) until
	// unpublish().
	void store(node_id const& key, std::string value, seconds ttl
		, std::function<void(store_result)> done, bool republish = true);
	void unpublish(node_id const& key);
	bool publishing(node_id const& key) const { return m_published.count(key) > 0; }

	void join(endpoint const& bootstrap, std::function<void(join_report)> done);

	// Starts a lookup for a random id in every bucket (from the nearest
	// occupied one outward) that saw no lookup within refresh_interval.
	std::vector<int> refresh_buckets(timestamp now);

	void send_signal_relay(peer_info const& to, signal_relay_body body
		, std::function<void(relay_result)> done);
	void set_signal_handler(signal_handler h) { m_signal_handler = std::move(h); }

	// unexpired records held for `key`, newest first
	std::vector<stored_record> local_records(node_id const& key);
	std::size_t record_count();

private:
	struct call
	{
		peer_info to;
		std::string datagram;
		int attempts = 0;
		timer_id timer = 0;
		std::function<void(std::optional<rpc_message>)> done;
	};

	struct lookup;
	struct publication
	{
		std::string value;
		seconds ttl;
		timer_id timer = 0;
	};

	void on_datagram(endpoint const& from, std::string_view raw);
	void learn(peer_info const& peer);
	void request(peer_info const& to, rpc_kind kind, rpc_body body
		, std::function<void(std::optional<rpc_message>)> done);
	void arm_timeout(node_id const& rpc_id);
	void on_timeout(node_id const& rpc_id);
	void send_datagram(endpoint const& to, std::string const& datagram);
	rpc_message make_message(rpc_kind kind, rpc_body body, node_id const& rpc_id) const;
	node_id fresh_rpc_id();

	void start_lookup(node_id const& target, bool want_value
		, std::function<void(std::shared_ptr<lookup> const&)> finished);
	void lookup_round(std::shared_ptr<lookup> const& l);
	void lookup_response(std::shared_ptr<lookup> const& l, node_id const& peer
		, std::optional<rpc_message> const& resp);
	void finish_lookup(std::shared_ptr<lookup> const& l);

	void replicate(node_id const& key, std::string const& value, seconds ttl
		, std::function<void(store_result)> done);
	void schedule_republish(node_id const& key);
	void schedule_refresh();
	void put_record(node_id const& key, std::string value, seconds ttl, node_id const& publisher);
	void purge_expired();

	std::unique_ptr<transport> m_transport;
	node_id m_id;
	node_config m_config;
	rng m_rng;
	routing_table m_table;

	pending_table m_pending;
	std::unordered_map<node_id, call, node_id_hash> m_calls;
	// buckets with an eviction probe in flight
	std::unordered_set<int> m_evicting;

	// key -> publisher -> record
	std::map<node_id, std::map<node_id, stored_record>> m_storage;
	std::map<node_id, publication> m_published;
	timer_id m_refresh_timer = 0;

	signal_handler m_signal_handler;
	node_stats m_stats;
};

} // namespace kadrtc
