"""Symbol vocabulary for phoneme sequences."""

from __future__ import annotations

PAD_SYMBOL = "<pad>"
EOS_SYMBOL = "<eos>"


class Vocabulary:
    """Maps space-separated phoneme symbols to integer ids.

    Id 0 is padding, id 1 the end-of-sequence marker appended to every
    encoded utterance.
    """

    def __init__(self, symbols: list[str]):
        if symbols[:2] != [PAD_SYMBOL, EOS_SYMBOL]:
            raise ValueError("symbol table must start with the pad and eos markers")
        self.symbols = list(symbols)
        self._index = {s: i for i, s in enumerate(self.symbols)}
        if len(self._index) != len(self.symbols):
            raise ValueError("duplicate symbols in vocabulary")

    @classmethod
    def from_corpus_symbols(cls, symbols) -> "Vocabulary":
        return cls([PAD_SYMBOL, EOS_SYMBOL] + sorted(set(symbols)))

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def eos_id(self) -> int:
        return 1

    def encode(self, phonemes: list[str], add_eos: bool = True) -> list[int]:
        try:
            ids = [self._index[p] for p in phonemes]
        except KeyError as exc:
            raise ValueError(f"out-of-vocabulary symbol {exc.args[0]!r}") from exc
        if add_eos:
            ids.append(self.eos_id)
        if not ids:
            raise ValueError("cannot encode an empty phoneme sequence")
        return ids

    def decode(self, ids) -> list[str]:
        return [self.symbols[i] for i in ids]
