"""EVM domain model: terms, opcodes, decoding and state."""
