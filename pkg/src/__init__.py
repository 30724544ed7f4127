# Leverage Bidder Package
