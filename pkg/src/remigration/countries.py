"""Country name normalisation to ISO 3166-1 alpha-2 codes."""

import functools

import pycountry

GERMANY = "DE"

# Names and abbreviations that show up in affiliation data but that
# pycountry's lookup does not resolve.
_ALIASES = {
    "uk": "GB",
    "england": "GB",
    "scotland": "GB",
    "wales": "GB",
    "northern ireland": "GB",
    "great britain": "GB",
    "united kingdom": "GB",
    "usa": "US",
    "u.s.a.": "US",
    "u.s.": "US",
    "united states of america": "US",
    "deutschland": "DE",
    "west germany": "DE",
    "federal republic of germany": "DE",
    "schweiz": "CH",
    "suisse": "CH",
    "österreich": "AT",
    "south korea": "KR",
    "korea": "KR",
    "republic of korea": "KR",
    "russia": "RU",
    "iran": "IR",
    "taiwan": "TW",
    "czech republic": "CZ",
    "the netherlands": "NL",
    "holland": "NL",
    "vietnam": "VN",
    "hong kong": "HK",
}


class UnknownCountryError(ValueError):
    pass


@functools.lru_cache(maxsize=4096)
def normalize_country(value):
    """Return the alpha-2 code for a country name or code.

    ``None`` and blank strings map to ``None``. Anything that cannot be
    resolved raises :class:`UnknownCountryError`.
    """
    if value is None:
        return None
    text = str(value).strip()
    if not text:
        return None
    alias = _ALIASES.get(text.lower())
    if alias is not None:
        return alias
    if len(text) == 2 and text.isalpha():
        country = pycountry.countries.get(alpha_2=text.upper())
        if country is None:
            raise UnknownCountryError(f"invalid alpha-2 code {text!r}")
        return country.alpha_2
    try:
        return pycountry.countries.lookup(text).alpha_2
    except LookupError:
        raise UnknownCountryError(f"unknown country {text!r}") from None


def is_alpha2(code):
    return isinstance(code, str) and len(code) == 2 and pycountry.countries.get(alpha_2=code) is not None
