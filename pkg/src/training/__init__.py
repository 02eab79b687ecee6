"""
Mixup augmentation, AdamW, checkpoint persistence and the training loop
"""
