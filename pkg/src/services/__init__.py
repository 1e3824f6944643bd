# Statistical services
