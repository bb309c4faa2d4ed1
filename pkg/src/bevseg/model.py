"""Full multi-camera BEV segmentation model.

images per camera -> shared CNN backbone -> per-camera encoder over the
multi-scale maps -> BEV query decoder cross-attending to the cameras'
coarsest enhanced maps -> dense segmentation head.  No camera intrinsics
or extrinsics enter the model; the view transformation is learned.
"""

from .decoder import Decoder
from .encoder import Encoder
from .backbone import Backbone
from .nn import Module
from .seg_head import SegHead
from .tensor import ShapeError

__all__ = ["BEVSegmenter"]


class BEVSegmenter(Module):
    def __init__(self, rng, cameras=2, dim=64, heads=2, points=4, ffn_dim=128,
                 enc_layers=2, dec_layers=2, grid_hw=(20, 40), num_classes=4,
                 backbone_widths=(32, 64, 128), final_hw=None,
                 decoder_kind="deformable", encoder_kind="deformable",
                 camera_embed=False, query_self_attn=True, cross_scale=True,
                 dropout=0.0, head_dropout=0.1):
        super().__init__()
        self.cameras = cameras
        self.backbone = Backbone(rng, widths=backbone_widths)
        self.encoder = Encoder(dim, heads, points, ffn_dim, enc_layers,
                               backbone_widths, rng, kind=encoder_kind,
                               cross_scale=cross_scale, dropout=dropout)
        self.decoder = Decoder(dim, heads, points, cameras, ffn_dim,
                               dec_layers, grid_hw, rng, kind=decoder_kind,
                               camera_embed=camera_embed,
                               query_self_attn=query_self_attn, dropout=dropout)
        self.head = SegHead(dim, num_classes, grid_hw, rng, final_hw=final_hw,
                            dropout=head_dropout)

    def forward(self, images, capture=False):
        """images [N_cam, 3, H, W] -> ([C_seg, H_out, W_out] logits,
        per-decoder-layer capture list or None)."""
        if images.data.ndim != 4 or images.data.shape[0] != self.cameras:
            raise ShapeError(
                f"expected [{self.cameras}, 3, H, W] images, got {images.data.shape}")
        stages = self.backbone(images)
        per_cam = self.encoder(stages)
        cam_maps = [maps[-1] for maps in per_cam]
        z, captures = self.decoder(cam_maps, capture=capture)
        return self.head(z), captures
