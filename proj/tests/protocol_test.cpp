#include "mbconn/protocol.hpp"

#include <gtest/gtest.h>

#include <random>

#include "support/oracles.hpp"
#include "support/protocol_cases.hpp"

using namespace mbconn;
using oracle::hex;

namespace {

template <class T>
T expect_ok(Parsed<T> p) {
  if (auto* e = std::get_if<ParseError>(&p)) {
    ADD_FAILURE() << "parse error: " << e->message;
    return T{};
  }
  return std::get<T>(std::move(p));
}

template <class T>
ParseErrc expect_error(const Parsed<T>& p) {
  EXPECT_FALSE(ok(p)) << "expected a parse error";
  return ok(p) ? ParseErrc::UnexpectedResponse : std::get<ParseError>(p).code;
}

using oracle::kFunctions;
using oracle::random_request;
using oracle::random_response;

}  // namespace

TEST(protocol_vectors, read_holding_request_frame) {
  const auto bytes = encode_request(1, 1, ReadRequest{RegisterSpace::HoldingRegisters, 0, 2});
  EXPECT_EQ(bytes, hex("00 01 00 00 00 06 01 03 00 00 00 02"));
  EXPECT_EQ(bytes, oracle::adu(1, 1, oracle::read_request_pdu(3, 0, 2)));

  auto d = expect_ok(decode_request(bytes));
  EXPECT_EQ(d.header, (MbapHeader{1, 0, 6, 1}));
  EXPECT_EQ(d.pdu, RequestPdu{(ReadRequest{RegisterSpace::HoldingRegisters, 0, 2})});
}

TEST(protocol_vectors, write_single_register_frame) {
  const auto bytes = encode_request(0, 0, WriteSingleRegister{0, 0});
  EXPECT_EQ(bytes, hex("00 00 00 00 00 06 00 06 00 00 00 00"));
  EXPECT_EQ(bytes, oracle::adu(0, 0, oracle::write_single_pdu(6, 0, 0)));
}

TEST(protocol_vectors, register_and_exception_response_pdus) {
  EXPECT_EQ(encode_response_pdu(
                ReadRegistersResponse{RegisterSpace::HoldingRegisters, {0x3F80, 0x0000}}),
            hex("03 04 3F 80 00 00"));
  EXPECT_EQ(encode_response_pdu(ExceptionResponse{3, ExceptionCode::IllegalDataAddress}),
            hex("83 02"));
}

// Worked examples from the Modbus application protocol specification.
TEST(protocol_vectors, application_protocol_examples) {
  EXPECT_EQ(encode_request_pdu(ReadRequest{RegisterSpace::Coils, 19, 19}), hex("01 00 13 00 13"));
  const ReadRequest coils{RegisterSpace::Coils, 19, 19};
  RequestPdu coils_req = coils;
  auto bits = expect_ok(decode_response_pdu(hex("01 03 CD 6B 05"), &coils_req));
  const std::vector<bool> expected_bits = {1, 0, 1, 1, 0, 0, 1, 1, 1, 1,
                                           0, 1, 0, 1, 1, 0, 1, 0, 1};
  EXPECT_EQ(std::get<ReadBitsResponse>(bits).bits, expected_bits);
  EXPECT_EQ(encode_response_pdu(ReadBitsResponse{RegisterSpace::Coils, expected_bits}),
            hex("01 03 CD 6B 05"));

  EXPECT_EQ(encode_request_pdu(ReadRequest{RegisterSpace::DiscreteInputs, 196, 22}),
            hex("02 00 C4 00 16"));
  RequestPdu di_req = ReadRequest{RegisterSpace::DiscreteInputs, 196, 22};
  auto di = expect_ok(decode_response_pdu(hex("02 03 AC DB 35"), &di_req));
  EXPECT_EQ(std::get<ReadBitsResponse>(di).bits.size(), 22u);
  EXPECT_EQ(encode_response_pdu(di), hex("02 03 AC DB 35"));

  EXPECT_EQ(encode_request_pdu(ReadRequest{RegisterSpace::HoldingRegisters, 107, 3}),
            hex("03 00 6B 00 03"));
  auto hr = expect_ok(decode_response_pdu(hex("03 06 02 2B 00 00 00 64")));
  EXPECT_EQ(std::get<ReadRegistersResponse>(hr).registers,
            (std::vector<std::uint16_t>{0x022B, 0x0000, 0x0064}));

  EXPECT_EQ(encode_request_pdu(ReadRequest{RegisterSpace::InputRegisters, 8, 1}),
            hex("04 00 08 00 01"));
  auto ir = expect_ok(decode_response_pdu(hex("04 02 00 0A")));
  EXPECT_EQ(std::get<ReadRegistersResponse>(ir).space, RegisterSpace::InputRegisters);

  EXPECT_EQ(encode_request_pdu(WriteSingleCoil{172, true}), hex("05 00 AC FF 00"));
  EXPECT_EQ(encode_request_pdu(WriteSingleRegister{1, 3}), hex("06 00 01 00 03"));
  EXPECT_EQ(encode_request_pdu(WriteMultipleCoils{19, {1, 0, 1, 1, 0, 0, 1, 1, 1, 0}}),
            hex("0F 00 13 00 0A 02 CD 01"));
  EXPECT_EQ(encode_response_pdu(WriteMultipleResponse{15, 19, 10}), hex("0F 00 13 00 0A"));
  EXPECT_EQ(encode_request_pdu(WriteMultipleRegisters{1, {0x000A, 0x0102}}),
            hex("10 00 01 00 02 04 00 0A 01 02"));
  EXPECT_EQ(encode_response_pdu(WriteMultipleResponse{16, 1, 2}), hex("10 00 01 00 02"));

  auto ex = expect_ok(decode_response_pdu(hex("81 02")));
  EXPECT_EQ(ex, ResponsePdu{(ExceptionResponse{1, ExceptionCode::IllegalDataAddress})});
}

TEST(protocol_round_trip, requests_per_function_code) {
  std::mt19937_64 rng(7);
  for (auto function : kFunctions) {
    for (int i = 0; i < 1000; ++i) {
      auto [req, pdu] = random_request(function, rng);
      const auto tid = static_cast<std::uint16_t>(rng());
      const auto unit = static_cast<std::uint8_t>(rng());
      const auto bytes = encode_request(tid, unit, req);
      ASSERT_EQ(bytes, oracle::adu(tid, unit, pdu)) << "function " << int(function);
      ASSERT_EQ(bytes.size(), 6u + (bytes[4] << 8 | bytes[5]));
      auto d = expect_ok(decode_request(bytes));
      ASSERT_EQ(d.header, (MbapHeader{tid, 0, static_cast<std::uint16_t>(pdu.size() + 1), unit}));
      ASSERT_EQ(d.pdu, req);
      ASSERT_EQ(function_code(req), function);
    }
  }
}

TEST(protocol_round_trip, responses_per_function_code) {
  std::mt19937_64 rng(11);
  for (auto function : kFunctions) {
    for (int i = 0; i < 1000; ++i) {
      auto c = random_response(function, rng);
      const auto tid = static_cast<std::uint16_t>(rng());
      const auto bytes = encode_response(tid, 9, c.response);
      ASSERT_EQ(bytes, oracle::adu(tid, 9, c.pdu)) << "function " << int(function);
      auto d = expect_ok(decode_response(bytes, &c.request));
      ASSERT_EQ(d.pdu, c.response);
      ASSERT_EQ(d.header.transaction_id, tid);
      if (std::holds_alternative<ExceptionResponse>(c.response)) {
        ASSERT_EQ(bytes[7], function | 0x80);
      } else {
        ASSERT_EQ(bytes[7], function);
      }
    }
  }
}

TEST(protocol_round_trip, bits_without_request_are_byte_padded) {
  const std::vector<bool> bits = {1, 0, 1};
  auto d = expect_ok(decode_response_pdu(encode_response_pdu(ReadBitsResponse{RegisterSpace::Coils, bits})));
  const auto& got = std::get<ReadBitsResponse>(d).bits;
  ASSERT_EQ(got.size(), 8u);
  EXPECT_EQ(std::vector<bool>(got.begin(), got.begin() + 3), bits);
}

TEST(protocol_decode, short_and_truncated_frames) {
  EXPECT_EQ(expect_error(decode_request({})), ParseErrc::ShortFrame);
  EXPECT_EQ(expect_error(decode_request(hex("00 01 00 00"))), ParseErrc::ShortFrame);
  const auto full = hex("00 01 00 00 00 06 01 03 00 00 00 02");
  const oracle::Bytes truncated(full.begin(), full.end() - 1);
  EXPECT_EQ(expect_error(decode_request(truncated)), ParseErrc::LengthMismatch);
  auto longer = full;
  longer.push_back(0);
  EXPECT_EQ(expect_error(decode_request(longer)), ParseErrc::LengthMismatch);
}

TEST(protocol_decode, header_checks) {
  EXPECT_EQ(expect_error(decode_request(hex("00 01 00 01 00 06 01 03 00 00 00 02"))),
            ParseErrc::BadProtocolId);
  EXPECT_FALSE(ok(parse_mbap_header(hex("00 01 00 00 00 01 01"))));
  EXPECT_FALSE(ok(parse_mbap_header(hex("00 01 00 00 00 FF 01"))));
  EXPECT_TRUE(ok(parse_mbap_header(hex("00 01 00 00 00 FE 01"))));
}

TEST(protocol_decode, request_pdu_errors) {
  EXPECT_EQ(expect_error(decode_request_pdu(hex("07"))), ParseErrc::UnknownFunction);
  EXPECT_EQ(expect_error(decode_request_pdu(hex("2B 0E 01 00"))), ParseErrc::UnknownFunction);
  EXPECT_EQ(expect_error(decode_request_pdu(hex("03 00 00 00 00"))), ParseErrc::IllegalQuantity);
  EXPECT_EQ(expect_error(decode_request_pdu(hex("03 00 00 00 7E"))), ParseErrc::IllegalQuantity);
  EXPECT_EQ(expect_error(decode_request_pdu(hex("01 00 00 07 D1"))), ParseErrc::IllegalQuantity);
  EXPECT_EQ(expect_error(decode_request_pdu(hex("03 FF FF 00 02"))), ParseErrc::IllegalAddress);
  EXPECT_EQ(expect_error(decode_request_pdu(hex("05 00 01 12 34"))), ParseErrc::IllegalCoilValue);
  EXPECT_EQ(expect_error(decode_request_pdu(hex("10 00 01 00 02 03 00 0A 01"))),
            ParseErrc::ByteCountMismatch);
  EXPECT_EQ(expect_error(decode_request_pdu(hex("10 00 01 00 7C F8"))),
            ParseErrc::IllegalQuantity);
  EXPECT_EQ(expect_error(decode_request_pdu(hex("03 00 00"))), ParseErrc::ShortFrame);
}

TEST(protocol_decode, exception_mapping) {
  EXPECT_EQ(exception_for(ParseErrc::UnknownFunction), ExceptionCode::IllegalFunction);
  EXPECT_EQ(exception_for(ParseErrc::IllegalAddress), ExceptionCode::IllegalDataAddress);
  EXPECT_EQ(exception_for(ParseErrc::IllegalQuantity), ExceptionCode::IllegalDataValue);
  EXPECT_EQ(exception_for(ParseErrc::ByteCountMismatch), ExceptionCode::IllegalDataValue);
}

TEST(protocol_decode, response_must_match_request) {
  RequestPdu req = ReadRequest{RegisterSpace::HoldingRegisters, 0, 2};
  EXPECT_EQ(expect_error(decode_response_pdu(hex("04 04 00 00 00 00"), &req)),
            ParseErrc::UnexpectedResponse);
  EXPECT_FALSE(ok(decode_response_pdu(hex("03 02 00 00"), &req)));
  EXPECT_EQ(expect_error(decode_response_pdu(hex("84 02"), &req)), ParseErrc::UnexpectedResponse);
  EXPECT_TRUE(ok(decode_response_pdu(hex("83 02"), &req)));

  RequestPdu w = WriteSingleRegister{5, 42};
  EXPECT_FALSE(ok(decode_response_pdu(hex("06 00 05 00 2B"), &w)));
  EXPECT_TRUE(ok(decode_response_pdu(hex("06 00 05 00 2A"), &w)));
}

TEST(protocol_encode, rejects_out_of_bounds_requests) {
  EXPECT_THROW(encode_request_pdu(ReadRequest{RegisterSpace::HoldingRegisters, 0, 0}), EncodeError);
  EXPECT_THROW(encode_request_pdu(ReadRequest{RegisterSpace::HoldingRegisters, 0, 126}),
               EncodeError);
  EXPECT_THROW(encode_request_pdu(ReadRequest{RegisterSpace::Coils, 0, 2001}), EncodeError);
  EXPECT_THROW(encode_request_pdu(ReadRequest{RegisterSpace::HoldingRegisters, 65535, 2}),
               EncodeError);
  EXPECT_NO_THROW(encode_request_pdu(ReadRequest{RegisterSpace::HoldingRegisters, 65535, 1}));
  EXPECT_THROW(encode_request_pdu(WriteMultipleRegisters{0, std::vector<std::uint16_t>(124)}),
               EncodeError);
  EXPECT_THROW(encode_request_pdu(WriteMultipleCoils{0, std::vector<bool>(1969)}), EncodeError);
  EXPECT_THROW(encode_request_pdu(WriteMultipleCoils{65535, std::vector<bool>(2)}), EncodeError);
  EXPECT_THROW(encode_response_pdu(ExceptionResponse{0x83, ExceptionCode::IllegalFunction}),
               EncodeError);
}

TEST(protocol_decode, random_bytes_never_throw) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20000; ++i) {
    oracle::Bytes b(rng() % 40);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng());
    if (b.size() >= 7 && (rng() & 1)) {
      b[2] = b[3] = 0;
      b[4] = 0;
      b[5] = static_cast<std::uint8_t>(b.size() - 6);
    }
    EXPECT_NO_THROW({
      (void)decode_request(b);
      (void)decode_response(b);
      (void)decode_request_pdu(b);
    });
  }
}

TEST(protocol_decode, coil_padding_bits_are_ignored) {
  // Ten coils, the six unused bits of the second byte set.
  const auto pdu = expect_ok(decode_request_pdu(hex("0F 00 13 00 0A 02 CD FD")));
  const auto& w = std::get<WriteMultipleCoils>(pdu);
  EXPECT_EQ(w.values, (std::vector<bool>{1, 0, 1, 1, 0, 0, 1, 1, 1, 0}));
  EXPECT_EQ(encode_request_pdu(pdu), hex("0F 00 13 00 0A 02 CD 01"));
}
