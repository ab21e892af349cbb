import re

# Han ideographs (incl. extensions and compatibility block), kana, hangul syllables.
_CJK = (
    "぀-ヿ㐀-䶿一-鿿가-힯豈-﫿"
    "\U00020000-\U0002ebef\U00030000-\U0003134f"
)
_TOKEN = re.compile(rf"[{_CJK}]|(?:(?![{_CJK}])[^\W_])+")


def tokenize(text: str) -> list[str]:
    """Lowercased tokens: one per CJK codepoint, one per run of other letters/digits."""
    return _TOKEN.findall(text.lower())


def is_cjk(ch: str) -> bool:
    return bool(re.fullmatch(f"[{_CJK}]", ch))
