"""Pluggable first-stage codecs between image frames and diffusion latents."""

from .codec import LATENT_CHANNELS, Codec, CodecSpec, LearnedCodec, build_codec, decode_latent, encode_image

__all__ = [
    "LATENT_CHANNELS",
    "Codec",
    "CodecSpec",
    "LearnedCodec",
    "build_codec",
    "encode_image",
    "decode_latent",
]
