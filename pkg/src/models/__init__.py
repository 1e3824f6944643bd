# Stratified models and data containers
